//! Estimators that refit the outcome chain so the augmentation terms vanish:
//! weighted GLMs and TMLE.

use std::ptr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::simple::{check_finite, eif2_terms};
use super::weights::{odds_ladder_clipped, Clipper, WeightLadder};
use super::{mean, EstimateDiagnostics, EstimatorOptions, Fluctuation, GmfEstimate, Method};
use crate::data::{ObservedData, Regime};
use crate::error::{Error, Result};
use crate::nuisance::design::expand_matrix;
use crate::nuisance::glm::{expit, fit_glm, logit, GlmFit, GlmProblem};
use crate::nuisance::{active_levels, DesignSpec, Expansion, Family, LearnerKind, Needs, NuisanceFitter, Response, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TmleLink {
    /// Logistic fluctuation; continuous outcomes are rescaled into (0, 1).
    #[default]
    Logit,
    /// Linear fluctuation on the original scale.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightedGlmVariant {
    /// Chain GLMs fitted with `w_ℓ` as case weights.
    #[default]
    FittingWeights,
    /// Unweighted GLMs with `w_ℓ` as an extra covariate, predicted at `h_ℓ`.
    CleverCovariate,
}

struct Prepared<'a> {
    train: &'a ObservedData,
    levels: Vec<usize>,
    tr: WeightLadder,
    ev: WeightLadder,
    clip: Clipper,
    same: bool,
}

fn prepare<'a>(
    fitter: &NuisanceFitter<'a>,
    eval: &ObservedData,
    regime: &Regime,
    opts: &EstimatorOptions,
) -> Result<Prepared<'a>> {
    let train = fitter.data();
    let set = fitter.nuisance_set(regime, Needs { treatment: true, ..Needs::default() })?;
    let mut clip = Clipper::new(opts.clip)?;
    let tr = odds_ladder_clipped(train, &set, &mut clip)?;
    let same = ptr::eq(train, eval);
    let ev = if same { tr.clone() } else { odds_ladder_clipped(eval, &set, &mut clip)? };
    Ok(Prepared { train, levels: active_levels(regime, fitter.options().chain), tr, ev, clip, same })
}

fn outcome_family(data: &ObservedData) -> Family {
    if data.binary_outcome() {
        Family::Binary
    } else {
        Family::Continuous
    }
}

fn with_column(m: Array2<f64>, col: &[f64]) -> Array2<f64> {
    let mut m = m;
    m.push_column(ArrayView1::from(col)).expect("row count matches");
    m
}

/// Unweighted GLM with the clever covariate `w_ℓ`; predictions use `h_ℓ`.
#[allow(clippy::too_many_arguments)]
fn covariate_fit(
    fitter: &NuisanceFitter<'_>,
    eval: &ObservedData,
    level: usize,
    arm: f64,
    response: &[f64],
    p: &Prepared<'_>,
    family: Family,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let choice = fitter.policy().choice(Role::Outcome(level));
    let expansion = match choice.learner {
        LearnerKind::Glm => Expansion::Linear,
        LearnerKind::Glm2 => Expansion::Quadratic,
        other => {
            return Err(Error::Unsupported(format!(
                "the clever-covariate variant needs a glm or glm2 outcome learner, got {other}"
            )))
        }
    };
    let covs = choice.covariates.clone().unwrap_or_else(|| (0..p.train.p()).collect());
    let label = format!("mu{level} clever covariate");
    let design = DesignSpec::new(p.train, covs, true, level, expansion, Response::Pseudo(label.clone()), family)?;
    let rows = with_column(expand_matrix(&design.base_matrix(p.train, None, None), expansion), &p.tr.w[level]);
    let fit = |ridge: f64| -> Result<GlmFit> {
        fit_glm(&GlmProblem { rows: &rows, response, weights: None, ridge, free_intercept: true, family })
    };
    let fit = match fit(0.0) {
        Ok(f) => f,
        Err(_) => {
            fitter.warn(format!("{label}: unpenalized fit failed; refitting with ridge penalty"));
            fit(fitter.options().learner.ridge).map_err(|e| e.in_nuisance(label.clone()))?
        }
    };
    let predict = |data: &ObservedData, h: &[f64]| -> Vec<f64> {
        let m = with_column(expand_matrix(&design.base_matrix(data, None, Some(arm)), expansion), h);
        m.rows().into_iter().map(|r| fit.predict(r.as_slice().expect("standard layout"))).collect()
    };
    let tr = predict(p.train, &p.tr.h[level]);
    let ev = if p.same { tr.clone() } else { predict(eval, &p.ev.h[level]) };
    Ok((tr, ev))
}

/// EIF estimator whose chain is refitted by weighted GLMs, so that
/// `P_n[w_ℓ(R_ℓ − μ_ℓ)] = 0` and `θ = P_n[μ_0]`.
pub fn eif2_weighted_glm(
    fitter: &NuisanceFitter<'_>,
    eval: &ObservedData,
    regime: &Regime,
    opts: &EstimatorOptions,
) -> Result<GmfEstimate> {
    regime.check_for(eval)?;
    let levels = active_levels(regime, fitter.options().chain);
    for &l in &levels {
        let learner = fitter.policy().choice(Role::Outcome(l)).learner;
        if !learner.is_glm_family() {
            return Err(Error::Unsupported(format!(
                "eif2-wglm needs glm, glm2 or saturated outcome learners, but mu{l} uses {learner}; use tmle for adaptive learners"
            )));
        }
    }
    let p = prepare(fitter, eval, regime, opts)?;
    let train = p.train;
    let family = outcome_family(train);
    let mut r_tr = train.y().to_vec();
    let mut preds_ev = vec![Vec::new(); p.levels.len()];
    let mut aug = vec![0.0; p.levels.len()];
    for idx in (0..p.levels.len()).rev() {
        let l = p.levels[idx];
        let arm = regime.a(l + 1);
        let (pt, pe) = match opts.weighted_glm {
            WeightedGlmVariant::FittingWeights => {
                let label = format!("mu{l}[{}] weighted", &regime.to_string()[l..]);
                let m = fitter.regress(None, l, &r_tr, Some(&p.tr.w[l]), family, &label)?;
                let pt = m.predict_rows(train, Some(arm));
                let pe = if p.same { pt.clone() } else { m.predict_rows(eval, Some(arm)) };
                (pt, pe)
            }
            WeightedGlmVariant::CleverCovariate => covariate_fit(fitter, eval, l, arm, &r_tr, &p, family)?,
        };
        let terms: Vec<f64> = (0..train.n()).map(|i| p.tr.w[l][i] * (r_tr[i] - pt[i])).collect();
        aug[idx] = mean(&terms);
        if p.same {
            let scale = 1.0 + r_tr.iter().map(|v| v.abs()).sum::<f64>() / train.n() as f64;
            if aug[idx].abs() > opts.score_tolerance * scale {
                return Err(Error::Numeric(format!(
                    "weighted fit of mu{l} left augmentation mean {:e}; the fit did not solve its score equation",
                    aug[idx]
                )));
            }
        }
        r_tr = pt;
        preds_ev[idx] = pe;
    }
    let s = eif2_terms(eval.y(), &p.levels, &preds_ev, &p.ev.w);
    let diag = EstimateDiagnostics {
        clipped: p.clip.clipped,
        clip_checks: p.clip.checks,
        max_weight: p.ev.max_weight(),
        augmentation_means: aug,
        warnings: fitter.warnings(),
        ..EstimateDiagnostics::default()
    };
    check_finite(GmfEstimate::build(regime, &Method::Eif2WeightedGlm, preds_ev[0].clone(), Some(s), diag))
}

/// Affine map of a continuous outcome into `[0.005, 0.995]`.
#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    span: f64,
}

impl Scale {
    const PAD: f64 = 0.005;

    fn identity() -> Self {
        Scale { lo: Self::PAD, span: 1.0 - 2.0 * Self::PAD }
    }

    fn to(&self, y: f64) -> f64 {
        Self::PAD + (1.0 - 2.0 * Self::PAD) * (y - self.lo) / self.span
    }

    fn from(&self, v: f64) -> f64 {
        self.lo + self.span * (v - Self::PAD) / (1.0 - 2.0 * Self::PAD)
    }
}

const PROB_FLOOR: f64 = 1e-12;

/// Solves `Σ w_i (r_i − expit(o_i + β w_i)) = 0` by Newton with step halving.
fn solve_logit(r: &[f64], offset: &[f64], w: &[f64], tol: f64) -> (f64, bool) {
    let idx: Vec<usize> = (0..r.len()).filter(|&i| w[i] != 0.0).collect();
    if idx.is_empty() {
        return (0.0, true);
    }
    let n = r.len() as f64;
    let score = |b: f64| -> f64 { idx.iter().map(|&i| w[i] * (r[i] - expit(offset[i] + b * w[i]))).sum::<f64>() / n };
    let mut beta = 0.0;
    let mut f = score(beta);
    for _ in 0..200 {
        if f.abs() < tol * 1e-3 {
            break;
        }
        let d: f64 = idx
            .iter()
            .map(|&i| {
                let p = expit(offset[i] + beta * w[i]);
                w[i] * w[i] * p * (1.0 - p)
            })
            .sum::<f64>()
            / n;
        if !(d > 0.0) {
            break;
        }
        let mut step = f / d;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = beta + step;
            let fc = score(cand);
            if fc.is_finite() && fc.abs() < f.abs() {
                beta = cand;
                f = fc;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (beta, f.is_finite() && f.abs() < tol)
}

/// Targeted minimum-loss estimator over the active chain levels.
pub fn tmle(fitter: &NuisanceFitter<'_>, eval: &ObservedData, regime: &Regime, opts: &EstimatorOptions) -> Result<GmfEstimate> {
    regime.check_for(eval)?;
    let p = prepare(fitter, eval, regime, opts)?;
    let train = p.train;
    let binary = train.binary_outcome();
    let scale = if opts.tmle_link == TmleLink::Logit && !binary {
        let lo = train.y().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = train.y().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Data("outcome has no finite values in the training sample".into()));
        }
        if hi > lo {
            Scale { lo, span: hi - lo }
        } else {
            // Constant outcome: centre it so every fit sits at 1/2.
            Scale { lo: lo - 0.5, span: 1.0 }
        }
    } else {
        Scale::identity()
    };
    let family = if opts.tmle_link == TmleLink::Logit || binary { Family::Binary } else { Family::Continuous };
    let mut r_tr: Vec<f64> = train.y().iter().map(|&y| scale.to(y)).collect();
    let mut r_ev: Vec<f64> = if p.same { r_tr.clone() } else { eval.y().iter().map(|&y| scale.to(y)).collect() };
    let mut preds_ev = vec![Vec::new(); p.levels.len()];
    let mut fluct = Vec::with_capacity(p.levels.len());
    for idx in (0..p.levels.len()).rev() {
        let l = p.levels[idx];
        let arm = regime.a(l + 1);
        let label = format!("mu{l}[{}] tmle", &regime.to_string()[l..]);
        let m = fitter.regress(None, l, &r_tr, None, family, &label)?;
        let clamp = |v: Vec<f64>| -> Vec<f64> {
            if opts.tmle_link == TmleLink::Logit {
                v.into_iter().map(|x| x.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)).collect()
            } else {
                v
            }
        };
        let init_tr = clamp(m.predict_rows(train, Some(arm)));
        let init_ev = if p.same { init_tr.clone() } else { clamp(m.predict_rows(eval, Some(arm))) };
        let w = &p.ev.w[l];
        let (beta, ok) = match opts.tmle_link {
            TmleLink::Logit => {
                let offset: Vec<f64> = init_ev.iter().map(|&v| logit(v)).collect();
                solve_logit(&r_ev, &offset, w, opts.score_tolerance)
            }
            TmleLink::Identity => {
                let num: f64 = (0..r_ev.len()).map(|i| w[i] * (r_ev[i] - init_ev[i])).sum();
                let den: f64 = w.iter().map(|v| v * v).sum();
                if den > 0.0 {
                    (num / den, true)
                } else {
                    (0.0, true)
                }
            }
        };
        let (beta, converged) = if ok && beta.is_finite() {
            (beta, true)
        } else {
            fitter.warn(format!(
                "tmle fluctuation for mu{l} in regime {regime} did not converge; using the untargeted fit"
            ));
            (0.0, false)
        };
        let update = |init: &[f64], h: &[f64]| -> Vec<f64> {
            match opts.tmle_link {
                TmleLink::Logit => init.iter().zip(h).map(|(&v, &h)| expit(logit(v) + beta * h)).collect(),
                TmleLink::Identity => init.iter().zip(h).map(|(&v, &h)| v + beta * h).collect(),
            }
        };
        let star_ev = update(&init_ev, &p.ev.h[l]);
        let star_tr = if p.same { star_ev.clone() } else { update(&init_tr, &p.tr.h[l]) };
        let score = mean(&(0..r_ev.len()).map(|i| w[i] * (r_ev[i] - star_ev[i])).collect::<Vec<_>>());
        fluct.push(Fluctuation { level: l, beta, score, converged });
        r_tr = star_tr;
        r_ev = star_ev.clone();
        preds_ev[idx] = star_ev;
    }
    fluct.reverse();
    let preds: Vec<Vec<f64>> = preds_ev.iter().map(|v| v.iter().map(|&x| scale.from(x)).collect()).collect();
    let s = eif2_terms(eval.y(), &p.levels, &preds, &p.ev.w);
    let diag = EstimateDiagnostics {
        clipped: p.clip.clipped,
        clip_checks: p.clip.checks,
        max_weight: p.ev.max_weight(),
        augmentation_means: fluct.iter().map(|f| f.score).collect(),
        fluctuations: fluct,
        warnings: fitter.warnings(),
    };
    check_finite(GmfEstimate::build(regime, &Method::Tmle, preds[0].clone(), Some(s), diag))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_round_trips() {
        let s = Scale { lo: -3.0, span: 10.0 };
        assert!((s.to(-3.0) - 0.005).abs() < 1e-15);
        assert!((s.to(7.0) - 0.995).abs() < 1e-15);
        assert!((s.from(s.to(1.234)) - 1.234).abs() < 1e-12);
        let id = Scale::identity();
        assert!((id.to(0.3) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn logit_fluctuation_solves_score() {
        let r = [0.2, 0.9, 0.5, 0.7, 0.1];
        let off = [0.0, 0.3, -0.2, 0.1, 0.4];
        let w = [1.5, 2.0, 0.0, 3.0, 1.0];
        let (b, ok) = solve_logit(&r, &off, &w, 1e-10);
        assert!(ok);
        let sc: f64 = (0..5).map(|i| w[i] * (r[i] - expit(off[i] + b * w[i]))).sum();
        assert!(sc.abs() < 1e-9);
    }
}
