//! Hybrid estimators: each step of the nested expectation is either a
//! regression (RI) or an importance weight (W).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::simple::{chain_predictions, check_finite, regression_impute};
use super::weights::Clipper;
use super::{EstimateDiagnostics, EstimatorOptions, GmfEstimate, Method};
use crate::data::{ObservedData, Regime};
use crate::error::{Error, Result};
use crate::nuisance::{active_levels, Family, FittedModel, Needs, NuisanceFitter, Scratch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Ri,
    W,
}

/// Steps listed from the outcome step outward, e.g. `ri-w-w` for `K = 2`
/// means regression for `Y` and weighting for `M_2` and `M_1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HybridChoice(pub Vec<Step>);

impl HybridChoice {
    /// Step used for position `t` (`t = K+1` is the outcome step).
    pub fn step(&self, t: usize) -> Step {
        self.0[self.0.len() - t]
    }
}

impl fmt::Display for HybridChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|s| if *s == Step::Ri { "ri" } else { "w" }).collect();
        f.write_str(&parts.join("-"))
    }
}

impl FromStr for HybridChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let steps = s
            .split('-')
            .map(|p| match p.trim().to_ascii_lowercase().as_str() {
                "ri" => Ok(Step::Ri),
                "w" => Ok(Step::W),
                other => Err(Error::Config(format!("bad hybrid step '{other}' in '{s}' (expected ri or w)"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HybridChoice(steps))
    }
}

/// How a weighting step converts the mediator law between arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RatioSource {
    /// Bayes-rule odds of the treatment models.
    #[default]
    Odds,
    /// Ratio of fitted mediator densities.
    Density,
}

/// Per-sample state of the backward pass.
struct Track<'a> {
    data: &'a ObservedData,
    r: Vec<f64>,
    weight: Vec<f64>,
}

struct RatioModels {
    pi: Vec<Option<std::sync::Arc<FittedModel>>>,
    f: Vec<Option<std::sync::Arc<crate::nuisance::DensityModel>>>,
}

impl RatioModels {
    /// `f_t(M_t | a_t)/f_t(M_t | c)` for every unit of `data`.
    fn ratios(&self, data: &ObservedData, t: usize, at: f64, c: f64, source: RatioSource, clip: &mut Clipper) -> Vec<f64> {
        if at == c {
            return vec![1.0; data.n()];
        }
        let mut s = Scratch::default();
        let mut ds = Vec::new();
        (0..data.n())
            .map(|i| match source {
                RatioSource::Odds => {
                    let unit = data.unit(i);
                    let pt = self.pi[t].as_ref().expect("fitted").predict_with(unit, &mut s);
                    let pp = self.pi[t - 1].as_ref().expect("fitted").predict_with(unit, &mut s);
                    (clip.arm(pt, at) / clip.arm(pt, c)) * (clip.arm(pp, c) / clip.arm(pp, at))
                }
                RatioSource::Density => {
                    let f = self.f[t].as_ref().expect("fitted");
                    let value = &data.m_row(i)[data.block(t).range()];
                    let num = f.density(data.unit_at(i, at), value, &mut ds);
                    let den = f.density(data.unit_at(i, c), value, &mut ds);
                    let r = num / den;
                    clip.ratio(if r.is_nan() { 0.0 } else { r })
                }
            })
            .collect()
    }
}

/// Hybrid RI/W estimator of `θ_ā`. Regressions are fitted on the fitter's
/// training sample and evaluated on `eval`.
pub fn hybrid(
    fitter: &NuisanceFitter<'_>,
    eval: &ObservedData,
    regime: &Regime,
    choice: &HybridChoice,
    opts: &EstimatorOptions,
) -> Result<GmfEstimate> {
    let k = regime.k();
    if choice.0.len() != k + 1 {
        return Err(Error::Config(format!(
            "hybrid choice '{choice}' has {} steps; regime {regime} needs {}",
            choice.0.len(),
            k + 1
        )));
    }
    let method = Method::Hybrid(choice.clone());
    let Some(t_w) = (1..=k + 1).rev().find(|&t| choice.step(t) == Step::W) else {
        let set = fitter.nuisance_set(regime, Needs { chain: true, ..Needs::default() })?;
        let mut est = regression_impute(eval, &set, opts)?;
        est.method = method.to_string();
        return Ok(est);
    };
    let train = fitter.data();
    let mut clip = Clipper::new(opts.clip)?;

    let mut models = RatioModels { pi: vec![None; k + 1], f: vec![None; k + 1] };
    for t in 1..t_w {
        match opts.ratio_source {
            RatioSource::Odds => {
                models.pi[t] = Some(fitter.treatment(t)?);
                models.pi[t - 1] = Some(fitter.treatment(t - 1)?);
            }
            RatioSource::Density => models.f[t] = Some(fitter.density(t)?),
        }
    }
    let pi0 = fitter.treatment(0)?;

    let start = |data: &ObservedData| -> Result<Vec<f64>> {
        if t_w == k + 1 {
            return Ok(data.y().to_vec());
        }
        let active = active_levels(regime, fitter.options().chain);
        let level = active.iter().copied().find(|&l| l >= t_w).unwrap_or(k);
        let m = fitter.outcome(regime, level)?;
        Ok(chain_predictions(&m, data, regime, level))
    };
    let mut tr = Track { data: train, r: start(train)?, weight: vec![1.0; train.n()] };
    let mut ev = Track { data: eval, r: start(eval)?, weight: vec![1.0; eval.n()] };
    let mut weighted = true;
    let mut c = regime.a(t_w);
    let binary = train.binary_outcome();

    for t in (1..t_w).rev() {
        let at = regime.a(t);
        match (choice.step(t), weighted) {
            (Step::W, false) => {
                weighted = true;
                c = at;
                tr.weight.iter_mut().for_each(|w| *w = 1.0);
                ev.weight.iter_mut().for_each(|w| *w = 1.0);
            }
            (Step::W, true) => {
                for track in [&mut tr, &mut ev] {
                    let r = models.ratios(track.data, t, at, c, opts.ratio_source, &mut clip);
                    track.weight.iter_mut().zip(r).for_each(|(w, r)| *w *= r);
                }
            }
            (Step::Ri, w) => {
                let (response, family, arm) = if w {
                    let r = models.ratios(train, t, at, c, opts.ratio_source, &mut clip);
                    let resp: Vec<f64> = (0..train.n()).map(|i| tr.r[i] * tr.weight[i] * r[i]).collect();
                    (resp, Family::Continuous, c)
                } else {
                    let fam = if binary { Family::Binary } else { Family::Continuous };
                    (tr.r.clone(), fam, at)
                };
                let label = format!("hybrid[{choice}] step {t}");
                let m = fitter.regress(None, t - 1, &response, None, family, &label)?;
                tr.r = m.predict_rows(train, Some(arm));
                ev.r = m.predict_rows(eval, Some(arm));
                weighted = false;
            }
        }
    }

    let s: Vec<f64> = if weighted {
        let mut sc = Scratch::default();
        (0..eval.n())
            .map(|i| {
                if eval.a(i) != c {
                    return 0.0;
                }
                let p = clip.arm(pi0.predict_with(eval.unit(i), &mut sc), c);
                ev.weight[i] * ev.r[i] / p
            })
            .collect()
    } else {
        ev.r
    };
    let maxw = ev.weight.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let diag = EstimateDiagnostics {
        clipped: clip.clipped,
        clip_checks: clip.checks,
        max_weight: maxw,
        warnings: fitter.warnings(),
        ..EstimateDiagnostics::default()
    };
    check_finite(GmfEstimate::build(regime, &method, s, None, diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choice_round_trip_and_positions() {
        let c: HybridChoice = "ri-w-w".parse().unwrap();
        assert_eq!(c.to_string(), "ri-w-w");
        assert_eq!(c.step(3), Step::Ri);
        assert_eq!(c.step(1), Step::W);
        assert!("ri-x".parse::<HybridChoice>().is_err());
    }
}
