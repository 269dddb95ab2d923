//! Estimators that only evaluate already-fitted nuisances on a sample.

use super::weights::{density_ladder, odds_ladder_clipped, Clipper};
use super::{EstimateDiagnostics, EstimatorOptions, GmfEstimate, Method};
use crate::data::{ObservedData, Regime, Unit};
use crate::error::{Error, Result};
use crate::nuisance::{DensityModel, FittedModel, NuisanceSet, Scratch};
use crate::rng;

fn diagnostics(clip: &Clipper, max_weight: f64) -> EstimateDiagnostics {
    EstimateDiagnostics {
        clipped: clip.clipped,
        clip_checks: clip.checks,
        max_weight,
        ..EstimateDiagnostics::default()
    }
}

pub(crate) fn check_finite(est: GmfEstimate) -> Result<GmfEstimate> {
    if est.theta.is_finite() {
        Ok(est)
    } else {
        Err(Error::Numeric(format!(
            "{} estimate for regime {} is not finite; check positivity or raise the clip level",
            est.method, est.regime
        )))
    }
}

/// Predictions of chain level `level` at its evaluation arm `a_{level+1}`.
pub(crate) fn chain_predictions(model: &FittedModel, eval: &ObservedData, regime: &Regime, level: usize) -> Vec<f64> {
    model.predict_rows(eval, Some(regime.a(level + 1)))
}

/// `P_n[μ_0(X, a_1)]`.
pub fn regression_impute(eval: &ObservedData, set: &NuisanceSet, _opts: &EstimatorOptions) -> Result<GmfEstimate> {
    let mu0 = set.mu(0)?;
    let s = chain_predictions(mu0, eval, &set.regime, 0);
    check_finite(GmfEstimate::build(&set.regime, &Method::RegressionImpute, s, None, EstimateDiagnostics::default()))
}

/// `P_n[w_K Y]` with treatment-odds weights.
pub fn weighting_a(eval: &ObservedData, set: &NuisanceSet, opts: &EstimatorOptions) -> Result<GmfEstimate> {
    let mut clip = Clipper::new(opts.clip)?;
    let ladder = odds_ladder_clipped(eval, set, &mut clip)?;
    let k = set.regime.k();
    let s: Vec<f64> = ladder.w[k].iter().zip(eval.y()).map(|(w, y)| w * y).collect();
    let diag = diagnostics(&clip, ladder.max_weight());
    check_finite(GmfEstimate::build(&set.regime, &Method::WeightingA, s, None, diag))
}

/// `P_n[v_K Y]` with mediator density-ratio weights.
pub fn weighting_m(eval: &ObservedData, set: &NuisanceSet, opts: &EstimatorOptions) -> Result<GmfEstimate> {
    let mut clip = Clipper::new(opts.clip)?;
    let v = density_ladder(eval, set, &mut clip)?;
    let k = set.regime.k();
    let s: Vec<f64> = v[k].iter().zip(eval.y()).map(|(w, y)| w * y).collect();
    let maxw = v[k].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    check_finite(GmfEstimate::build(&set.regime, &Method::WeightingM, s, None, diagnostics(&clip, maxw)))
}

/// Sequential-regression EIF estimator over the active chain levels.
pub fn eif2(eval: &ObservedData, set: &NuisanceSet, opts: &EstimatorOptions) -> Result<GmfEstimate> {
    let mut clip = Clipper::new(opts.clip)?;
    let ladder = odds_ladder_clipped(eval, set, &mut clip)?;
    let levels = set.active_levels();
    let preds = levels
        .iter()
        .map(|&l| set.mu(l).map(|m| chain_predictions(m, eval, &set.regime, l)))
        .collect::<Result<Vec<_>>>()?;
    let s = eif2_terms(eval.y(), &levels, &preds, &ladder.w);
    let diag = diagnostics(&clip, ladder.max_weight());
    check_finite(GmfEstimate::build(&set.regime, &Method::Eif2, s.clone(), Some(s), diag))
}

/// Per-unit `w_top(Y − μ_top) + Σ w_{ℓ_{i-1}}(μ_{ℓ_i} − μ_{ℓ_{i-1}}) + μ_0`.
pub(crate) fn eif2_terms(y: &[f64], levels: &[usize], preds: &[Vec<f64>], w: &[Vec<f64>]) -> Vec<f64> {
    let top = levels.len() - 1;
    (0..y.len())
        .map(|i| {
            let mut s = w[levels[top]][i] * (y[i] - preds[top][i]);
            for idx in (1..levels.len()).rev() {
                s += w[levels[idx - 1]][i] * (preds[idx][i] - preds[idx - 1][i]);
            }
            s += preds[0][i];
            s
        })
        .collect()
}

/// Integrates `μ_K` over the mediator densities under the regime.
struct MleIntegrator<'a> {
    regime: &'a Regime,
    data: &'a ObservedData,
    mu_top: &'a FittedModel,
    f: Vec<&'a DensityModel>,
    draws: usize,
    scratch: Scratch,
    dscratch: Vec<f64>,
}

impl<'a> MleIntegrator<'a> {
    fn new(eval: &'a ObservedData, set: &'a NuisanceSet, draws: usize) -> Result<Self> {
        let k = set.regime.k();
        if draws == 0 {
            return Err(Error::Config("mc_draws must be positive".into()));
        }
        Ok(MleIntegrator {
            regime: &set.regime,
            data: eval,
            mu_top: set.mu_top()?,
            f: (1..=k).map(|j| set.f(j)).collect::<Result<Vec<_>>>()?,
            draws,
            scratch: Scratch::default(),
            dscratch: Vec::new(),
        })
    }

    /// `μ^mle_level(x, m̄_level)`; entries of `m` past block `level` are scratch.
    fn value<R: rand::Rng>(&mut self, level: usize, x: &[f64], m: &mut [f64], rng: &mut R) -> f64 {
        let k = self.regime.k();
        if level == k {
            let unit = Unit { x, a: self.regime.a(k + 1), m };
            return self.mu_top.predict_with(unit, &mut self.scratch);
        }
        let block = level + 1;
        let f = self.f[level];
        let range = self.data.block(block).range();
        let saved: Vec<f64> = m[range.clone()].to_vec();
        let cond = Unit { x, a: self.regime.a(block), m };
        let acc = if let Some(probs) = f.pmf(cond, &mut self.dscratch) {
            let support = f.support().expect("table form");
            let mut acc = 0.0;
            for (value, p) in support.iter().zip(probs) {
                if p == 0.0 {
                    continue;
                }
                m[range.clone()].copy_from_slice(value);
                acc += p * self.value(level + 1, x, m, rng);
            }
            acc
        } else {
            let (mean, sd) = f.gaussian(cond, &mut self.dscratch).expect("gaussian form");
            let z = DensityModel::normal_draws(rng, self.draws);
            let mut acc = 0.0;
            for zi in &z {
                m[range.start] = mean + sd * zi;
                acc += self.value(level + 1, x, m, rng);
            }
            acc / z.len() as f64
        };
        m[range].copy_from_slice(&saved);
        acc
    }

    /// `μ^mle_level` at every unit's observed history.
    fn at_observed(&mut self, level: usize, seed: u64) -> Vec<f64> {
        let base = rng::derive(seed, level as u64);
        (0..self.data.n())
            .map(|i| {
                let mut m = self.data.m_row(i).to_vec();
                let mut r = rng::stream(base, i as u64);
                self.value(level, self.data.x_row(i), &mut m, &mut r)
            })
            .collect()
    }
}

/// `P_n[μ^mle_0]`: the outcome model integrated over the mediator densities.
pub fn plugin_mle(eval: &ObservedData, set: &NuisanceSet, opts: &EstimatorOptions) -> Result<GmfEstimate> {
    let mut integ = MleIntegrator::new(eval, set, opts.mc_draws)?;
    let s = integ.at_observed(0, opts.seed);
    check_finite(GmfEstimate::build(&set.regime, &Method::PluginMle, s, None, EstimateDiagnostics::default()))
}

/// Density-ratio EIF estimator built on `μ^mle`.
pub fn eif1(eval: &ObservedData, set: &NuisanceSet, opts: &EstimatorOptions) -> Result<GmfEstimate> {
    let k = set.regime.k();
    let mut clip = Clipper::new(opts.clip)?;
    let v = density_ladder(eval, set, &mut clip)?;
    let mut integ = MleIntegrator::new(eval, set, opts.mc_draws)?;
    let mle: Vec<Vec<f64>> = (0..=k).map(|l| integ.at_observed(l, opts.seed)).collect();
    let levels: Vec<usize> = (0..=k).collect();
    let s = eif2_terms(eval.y(), &levels, &mle, &v);
    let maxw = v.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    let diag = diagnostics(&clip, maxw);
    check_finite(GmfEstimate::build(&set.regime, &Method::Eif1, s.clone(), Some(s), diag))
}
