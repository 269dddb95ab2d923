//! Method dispatch, shared fitting across regimes, and cross-fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hybrid::hybrid;
use super::simple::{eif1, eif2, plugin_mle, regression_impute, weighting_a, weighting_m};
use super::targeted::{eif2_weighted_glm, tmle};
use super::{mean, EstimateDiagnostics, EstimatorOptions, GmfEstimate, Method};
use crate::data::{ObservedData, Regime};
use crate::error::{Error, Result};
use crate::nuisance::{make_folds, FitOptions, LearnerPolicy, NuisanceFitter};
use crate::rng;

/// Everything needed to turn data and a regime into an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSettings {
    pub policy: LearnerPolicy,
    pub fit: FitOptions,
    pub estimator: EstimatorOptions,
    /// Number of cross-fitting folds; 1 fits and evaluates on the full sample.
    pub folds: usize,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            policy: LearnerPolicy::default(),
            fit: FitOptions::default(),
            estimator: EstimatorOptions::default(),
            folds: 1,
        }
    }
}

/// Evaluates `method` on `eval` using models from `fitter`.
pub fn evaluate(
    fitter: &NuisanceFitter<'_>,
    eval: &ObservedData,
    regime: &Regime,
    method: &Method,
    opts: &EstimatorOptions,
) -> Result<GmfEstimate> {
    regime.check_for(fitter.data())?;
    let mut est = match method {
        Method::Hybrid(choice) => hybrid(fitter, eval, regime, choice, opts)?,
        Method::Eif2WeightedGlm => eif2_weighted_glm(fitter, eval, regime, opts)?,
        Method::Tmle => tmle(fitter, eval, regime, opts)?,
        _ => {
            let set = fitter.nuisance_set(regime, method.needs())?;
            match method {
                Method::PluginMle => plugin_mle(eval, &set, opts)?,
                Method::RegressionImpute => regression_impute(eval, &set, opts)?,
                Method::WeightingM => weighting_m(eval, &set, opts)?,
                Method::WeightingA => weighting_a(eval, &set, opts)?,
                Method::Eif1 => eif1(eval, &set, opts)?,
                Method::Eif2 => eif2(eval, &set, opts)?,
                _ => unreachable!("handled above"),
            }
        }
    };
    for w in fitter.warnings() {
        if !est.diagnostics.warnings.contains(&w) {
            est.diagnostics.warnings.push(w);
        }
    }
    Ok(est)
}

/// Estimates for several regimes from one set of fits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeEstimates {
    pub estimates: Vec<GmfEstimate>,
    /// Models fitted in total (summed over folds).
    pub fits: usize,
    pub folds: usize,
    pub warnings: Vec<String>,
}

/// Estimates every regime with `method`, sharing nuisance fits between them.
pub fn estimate_regimes(
    data: &ObservedData,
    regimes: &[Regime],
    method: &Method,
    settings: &EstimationSettings,
) -> Result<RegimeEstimates> {
    for r in regimes {
        r.check_for(data)?;
    }
    if settings.folds <= 1 {
        let fitter = NuisanceFitter::new(data, settings.policy.clone(), settings.fit.clone());
        let estimates = regimes
            .iter()
            .map(|r| evaluate(&fitter, data, r, method, &settings.estimator))
            .collect::<Result<Vec<_>>>()?;
        return Ok(RegimeEstimates { estimates, fits: fitter.fit_count(), folds: 1, warnings: fitter.warnings() });
    }

    let j = settings.folds;
    let plan = make_folds(data.n(), j, rng::derive_tag(settings.fit.seed, "folds"))?;
    let per_fold = (0..j)
        .into_par_iter()
        .map(|f| -> Result<(Vec<GmfEstimate>, usize, Vec<String>)> {
            let train = data.subset(&plan.complement(f));
            let (control, treated) = train.arm_counts();
            if control == 0 || treated == 0 {
                return Err(Error::Data(format!(
                    "training sample for fold {} has an empty treatment arm; use fewer folds",
                    f + 1
                )));
            }
            let eval = data.subset(&plan.fold(f));
            let mut fit = settings.fit.clone();
            fit.seed = rng::derive(settings.fit.seed, f as u64);
            let fitter = NuisanceFitter::new(&train, settings.policy.clone(), fit);
            let ests = regimes
                .iter()
                .map(|r| evaluate(&fitter, &eval, r, method, &settings.estimator))
                .collect::<Result<Vec<_>>>()?;
            Ok((ests, fitter.fit_count(), fitter.warnings()))
        })
        .collect::<Result<Vec<_>>>()?;

    let n = data.n();
    let mut fits = 0;
    let mut warnings: Vec<String> = Vec::new();
    for (_, c, w) in &per_fold {
        fits += c;
        for m in w {
            if !warnings.contains(m) {
                warnings.push(m.clone());
            }
        }
    }
    let estimates = regimes
        .iter()
        .enumerate()
        .map(|(ri, regime)| {
            let mut summands = vec![0.0; n];
            let mut eif = method.has_eif().then(|| vec![0.0; n]);
            let mut fold_thetas = Vec::with_capacity(j);
            let mut diag = EstimateDiagnostics::default();
            for (f, (ests, _, _)) in per_fold.iter().enumerate() {
                let e = &ests[ri];
                for (pos, &i) in plan.fold(f).iter().enumerate() {
                    summands[i] = e.summands[pos];
                    if let (Some(out), Some(src)) = (eif.as_mut(), e.eif.as_ref()) {
                        out[i] = src[pos];
                    }
                }
                fold_thetas.push(e.theta);
                diag.absorb(&e.diagnostics);
            }
            GmfEstimate {
                regime: regime.clone(),
                method: method.to_string(),
                theta: mean(&summands),
                summands,
                eif,
                fold_thetas,
                diagnostics: diag,
            }
        })
        .collect();
    Ok(RegimeEstimates { estimates, fits, folds: j, warnings })
}

/// Estimate of a single regime, cross-fitted when `settings.folds > 1`.
pub fn estimate(data: &ObservedData, regime: &Regime, method: &Method, settings: &EstimationSettings) -> Result<GmfEstimate> {
    let mut r = estimate_regimes(data, std::slice::from_ref(regime), method, settings)?;
    Ok(r.estimates.remove(0))
}

/// Cross-fitted estimate with `folds` folds.
pub fn cross_fit(
    data: &ObservedData,
    regime: &Regime,
    method: &Method,
    settings: &EstimationSettings,
    folds: usize,
) -> Result<GmfEstimate> {
    if folds < 2 {
        return Err(Error::Config(format!("cross-fitting needs at least 2 folds, got {folds}")));
    }
    let s = EstimationSettings { folds, ..settings.clone() };
    estimate(data, regime, method, &s)
}
