//! Gradient-boosted depth-1 trees on binned features.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::glm::{expit, Family};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub holdout: f64,
    /// Stop after this many rounds without holdout improvement.
    pub patience: usize,
    pub max_bins: usize,
    pub min_leaf: usize,
    pub leaf_l2: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        BoostParams {
            rounds: 200,
            learning_rate: 0.1,
            holdout: 0.2,
            patience: 20,
            max_bins: 32,
            min_leaf: 5,
            leaf_l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostFit {
    family: Family,
    init: f64,
    stumps: Vec<Stump>,
}

impl BoostFit {
    pub fn rounds(&self) -> usize {
        self.stumps.len()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut score = self.init;
        for s in &self.stumps {
            score += if row[s.feature] <= s.threshold { s.left } else { s.right };
        }
        match self.family {
            Family::Binary => expit(score),
            Family::Continuous => score,
        }
    }
}

fn thresholds(values: &mut [f64], max_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let mut out: Vec<f64> = Vec::new();
    for b in 1..max_bins {
        let v = values[(b * n / max_bins).min(n - 1)];
        // Split halfway to the next larger value so the threshold separates.
        let next = values.get(values.partition_point(|&w| w <= v)).copied();
        if let Some(next) = next {
            let t = 0.5 * (v + next);
            if out.last().map_or(true, |&last| t > last) {
                out.push(t);
            }
        }
    }
    out
}

pub fn fit_boost(base: &Array2<f64>, y: &[f64], family: Family, params: &BoostParams, seed: u64) -> Result<BoostFit> {
    let (n, p) = base.dim();
    if n < 2 {
        return Err(Error::Data("boosting needs at least 2 rows".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0xB005_7000));
    let n_hold = ((n as f64) * params.holdout).round() as usize;
    let n_hold = if n - n_hold < 2 { 0 } else { n_hold };
    let (hold, train) = order.split_at(n_hold);

    let mean = train.iter().map(|&i| y[i]).sum::<f64>() / train.len() as f64;
    let init = match family {
        Family::Binary => {
            let m = mean.clamp(1e-6, 1.0 - 1e-6);
            (m / (1.0 - m)).ln()
        }
        Family::Continuous => mean,
    };

    // Per-feature cut points and bin codes for training rows.
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut codes: Vec<Vec<u16>> = Vec::with_capacity(p);
    for f in 0..p {
        let mut vals: Vec<f64> = train.iter().map(|&i| base[(i, f)]).collect();
        let t = thresholds(&mut vals, params.max_bins);
        let c = train
            .iter()
            .map(|&i| t.partition_point(|&cut| cut < base[(i, f)]) as u16)
            .collect();
        cuts.push(t);
        codes.push(c);
    }

    let mut score_tr: Vec<f64> = vec![init; train.len()];
    let mut score_ho: Vec<f64> = vec![init; hold.len()];
    let loss = |s: f64, yi: f64| match family {
        Family::Binary => {
            let e = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            e - yi * s
        }
        Family::Continuous => 0.5 * (yi - s) * (yi - s),
    };
    let holdout_loss =
        |sc: &[f64]| -> f64 { hold.iter().zip(sc).map(|(&i, &s)| loss(s, y[i])).sum::<f64>() };

    let mut stumps: Vec<Stump> = Vec::new();
    let mut best_loss = holdout_loss(&score_ho);
    let mut best_len = 0;
    let mut grad = vec![0.0; train.len()];
    let mut hess = vec![0.0; train.len()];
    for _round in 0..params.rounds {
        for (r, &i) in train.iter().enumerate() {
            match family {
                Family::Binary => {
                    let pr = expit(score_tr[r]);
                    grad[r] = y[i] - pr;
                    hess[r] = (pr * (1.0 - pr)).max(1e-12);
                }
                Family::Continuous => {
                    grad[r] = y[i] - score_tr[r];
                    hess[r] = 1.0;
                }
            }
        }
        let g_tot: f64 = grad.iter().sum();
        let h_tot: f64 = hess.iter().sum();
        let mut best: Option<(f64, usize, usize)> = None;
        for f in 0..p {
            let nb = cuts[f].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut gs = vec![0.0; nb];
            let mut hs = vec![0.0; nb];
            let mut cs = vec![0usize; nb];
            for (r, &b) in codes[f].iter().enumerate() {
                gs[b as usize] += grad[r];
                hs[b as usize] += hess[r];
                cs[b as usize] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                gl += gs[b];
                hl += hs[b];
                cl += cs[b];
                let cr = train.len() - cl;
                if cl < params.min_leaf || cr < params.min_leaf {
                    continue;
                }
                let gr = g_tot - gl;
                let hr = h_tot - hl;
                let gain = gl * gl / (hl + params.leaf_l2) + gr * gr / (hr + params.leaf_l2)
                    - g_tot * g_tot / (h_tot + params.leaf_l2);
                if best.map_or(true, |(g, _, _)| gain > g) {
                    best = Some((gain, f, b));
                }
            }
        }
        let Some((gain, f, b)) = best else { break };
        if gain <= 1e-12 {
            break;
        }
        let (mut gl, mut hl) = (0.0, 0.0);
        for (r, &code) in codes[f].iter().enumerate() {
            if (code as usize) <= b {
                gl += grad[r];
                hl += hess[r];
            }
        }
        let stump = Stump {
            feature: f,
            threshold: cuts[f][b],
            left: params.learning_rate * gl / (hl + params.leaf_l2),
            right: params.learning_rate * (g_tot - gl) / (h_tot - hl + params.leaf_l2),
        };
        for (r, &code) in codes[f].iter().enumerate() {
            score_tr[r] += if (code as usize) <= b { stump.left } else { stump.right };
        }
        for (r, &i) in hold.iter().enumerate() {
            score_ho[r] += if base[(i, f)] <= stump.threshold { stump.left } else { stump.right };
        }
        stumps.push(stump);
        if hold.is_empty() {
            best_len = stumps.len();
            continue;
        }
        let l = holdout_loss(&score_ho);
        if l < best_loss {
            best_loss = l;
            best_len = stumps.len();
        } else if stumps.len() - best_len >= params.patience {
            break;
        }
    }
    stumps.truncate(best_len);
    Ok(BoostFit { family, init, stumps })
}
