//! Inverse-probability weights built from treatment odds or mediator density ratios.

use serde::{Deserialize, Serialize};

use crate::data::{ObservedData, Regime};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceSet, Scratch};

/// Clips probabilities into `[ε, 1−ε]` and caps density ratios at `1/ε`,
/// counting how often either bound binds.
#[derive(Debug, Clone)]
pub(crate) struct Clipper {
    eps: f64,
    pub clipped: usize,
    pub checks: usize,
}

impl Clipper {
    pub fn new(eps: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&eps) {
            return Err(Error::Config(format!("clip level must lie in [0, 0.5), got {eps}")));
        }
        Ok(Clipper { eps, clipped: 0, checks: 0 })
    }

    /// `P(A = 1 | ·)` clipped.
    pub fn prob(&mut self, p: f64) -> f64 {
        self.checks += 1;
        let (lo, hi) = (self.eps, 1.0 - self.eps);
        if p < lo || p > hi {
            if self.eps > 0.0 {
                self.clipped += 1;
            }
            p.clamp(lo, hi)
        } else {
            p
        }
    }

    /// Clipped probability of arm `a` given `P(A = 1 | ·) = p1`.
    pub fn arm(&mut self, p1: f64, a: f64) -> f64 {
        let p = self.prob(p1);
        if a == 1.0 {
            p
        } else {
            1.0 - p
        }
    }

    pub fn ratio(&mut self, r: f64) -> f64 {
        self.checks += 1;
        if self.eps > 0.0 && r > 1.0 / self.eps {
            self.clipped += 1;
            1.0 / self.eps
        } else {
            r
        }
    }
}

/// Per-level weights on one sample.
///
/// `h[ℓ][i] = 1/π_0(a_1|x_i) · Π_{j≤ℓ} π_j(a_j|·)/π_j(a_{j+1}|·)` and
/// `w[ℓ][i] = I(A_i = a_{ℓ+1}) · h[ℓ][i]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightLadder {
    pub h: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

impl WeightLadder {
    pub fn max_weight(&self) -> f64 {
        self.w.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Treatment-odds weights for every level `0..=K`. Only the `π_j` with
/// `a_j ≠ a_{j+1}` are evaluated; the other ratios are exactly one.
pub fn odds_ladder(eval: &ObservedData, set: &NuisanceSet, clip: f64) -> Result<WeightLadder> {
    let mut clip = Clipper::new(clip)?;
    odds_ladder_clipped(eval, set, &mut clip)
}

pub(crate) fn odds_ladder_clipped(eval: &ObservedData, set: &NuisanceSet, clip: &mut Clipper) -> Result<WeightLadder> {
    let regime = &set.regime;
    let k = regime.k();
    let pi0 = set.pi(0)?;
    let switches: Vec<usize> = (1..=k).filter(|&j| regime.a(j) != regime.a(j + 1)).collect();
    let pis = switches.iter().map(|&j| set.pi(j).map(|m| (j, m))).collect::<Result<Vec<_>>>()?;
    let n = eval.n();
    let mut h = vec![vec![0.0; n]; k + 1];
    let mut w = vec![vec![0.0; n]; k + 1];
    let mut s = Scratch::default();
    for i in 0..n {
        let unit = eval.unit(i);
        let mut hi = 1.0 / clip.arm(pi0.predict_with(unit, &mut s), regime.a(1));
        let mut next = pis.iter().peekable();
        for level in 0..=k {
            if let Some(&&(j, m)) = next.peek() {
                if j == level {
                    let p1 = m.predict_with(unit, &mut s);
                    hi *= clip.arm(p1, regime.a(j)) / clip.arm(p1, regime.a(j + 1));
                    next.next();
                }
            }
            h[level][i] = hi;
            w[level][i] = if eval.a(i) == regime.a(level + 1) { hi } else { 0.0 };
        }
    }
    Ok(WeightLadder { h, w })
}

/// Mediator density values `f_j(M_j | x, a, m̄_{j-1})` at both arms, per unit.
pub(crate) fn density_pairs(eval: &ObservedData, set: &NuisanceSet) -> Result<Vec<Vec<[f64; 2]>>> {
    let k = set.regime.k();
    let models = (1..=k).map(|j| set.f(j)).collect::<Result<Vec<_>>>()?;
    let mut scratch = Vec::new();
    let mut out = Vec::with_capacity(eval.n());
    for i in 0..eval.n() {
        let m = eval.m_row(i);
        let row = models
            .iter()
            .enumerate()
            .map(|(idx, f)| {
                let value = &m[eval.block(idx + 1).range()];
                [
                    f.density(eval.unit_at(i, 0.0), value, &mut scratch),
                    f.density(eval.unit_at(i, 1.0), value, &mut scratch),
                ]
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// Density-ratio weights
/// `v[ℓ][i] = I(A_i = a_{ℓ+1})/π_0(a_{ℓ+1}|x_i) · Π_{j≤ℓ} f_j(M_j|a_j)/f_j(M_j|a_{ℓ+1})`.
pub(crate) fn density_ladder(eval: &ObservedData, set: &NuisanceSet, clip: &mut Clipper) -> Result<Vec<Vec<f64>>> {
    let regime: &Regime = &set.regime;
    let k = regime.k();
    let pi0 = set.pi(0)?;
    let dens = density_pairs(eval, set)?;
    let mut v = vec![vec![0.0; eval.n()]; k + 1];
    let mut s = Scratch::default();
    for i in 0..eval.n() {
        let p1 = pi0.predict_with(eval.unit(i), &mut s);
        for level in 0..=k {
            let target = regime.a(level + 1);
            if eval.a(i) != target {
                continue;
            }
            let mut val = 1.0 / clip.arm(p1, target);
            for j in 1..=level {
                let aj = regime.a(j);
                if aj != target {
                    let pair = dens[i][j - 1];
                    let r = pair[aj as usize] / pair[target as usize];
                    val *= clip.ratio(if r.is_nan() { 0.0 } else { r });
                }
            }
            v[level][i] = val;
        }
    }
    Ok(v)
}
