//! Estimators of `θ_ā`: plug-in, regression imputation, weighting, hybrids,
//! the two EIF-based estimators, the weighted-GLM variant and TMLE.
//!
//! Every estimator returns a [`GmfEstimate`] whose `summands` average to
//! `theta`. EIF-based methods also carry the per-unit influence values.

mod crossfit;
mod hybrid;
mod simple;
mod targeted;
pub mod weights;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crossfit::{cross_fit, estimate, estimate_regimes, evaluate, EstimationSettings, RegimeEstimates};
pub use hybrid::{hybrid, HybridChoice, RatioSource, Step};
pub use simple::{eif1, eif2, plugin_mle, regression_impute, weighting_a, weighting_m};
pub use targeted::{eif2_weighted_glm, tmle, TmleLink, WeightedGlmVariant};
pub use weights::{odds_ladder, WeightLadder};

use crate::data::Regime;
use crate::error::{Error, Result};
use crate::nuisance::Needs;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Method {
    PluginMle,
    RegressionImpute,
    WeightingM,
    WeightingA,
    Hybrid(HybridChoice),
    Eif1,
    Eif2,
    Eif2WeightedGlm,
    Tmle,
}

impl Method {
    /// Whether the method produces per-unit influence-function values.
    pub fn has_eif(&self) -> bool {
        matches!(self, Method::Eif1 | Method::Eif2 | Method::Eif2WeightedGlm | Method::Tmle)
    }

    pub fn needs(&self) -> Needs {
        match self {
            Method::PluginMle => Needs { density: true, outcome_top: true, ..Needs::default() },
            Method::RegressionImpute => Needs { chain: true, ..Needs::default() },
            Method::WeightingM => Needs { propensity: true, density: true, ..Needs::default() },
            Method::WeightingA => Needs { treatment: true, ..Needs::default() },
            Method::Eif1 => Needs { propensity: true, density: true, outcome_top: true, ..Needs::default() },
            Method::Eif2 => Needs { treatment: true, chain: true, ..Needs::default() },
            // These refit internally; only the treatment models are shared.
            Method::Eif2WeightedGlm | Method::Tmle => Needs { treatment: true, ..Needs::default() },
            Method::Hybrid(_) => Needs::default(),
        }
    }

    pub fn all_basic() -> Vec<Method> {
        vec![
            Method::PluginMle,
            Method::RegressionImpute,
            Method::WeightingM,
            Method::WeightingA,
            Method::Eif1,
            Method::Eif2,
            Method::Eif2WeightedGlm,
            Method::Tmle,
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::PluginMle => f.write_str("plugin-mle"),
            Method::RegressionImpute => f.write_str("ri"),
            Method::WeightingM => f.write_str("weighting-m"),
            Method::WeightingA => f.write_str("weighting-a"),
            Method::Hybrid(c) => write!(f, "hybrid:{c}"),
            Method::Eif1 => f.write_str("eif1"),
            Method::Eif2 => f.write_str("eif2"),
            Method::Eif2WeightedGlm => f.write_str("eif2-wglm"),
            Method::Tmle => f.write_str("tmle"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(rest) = t.strip_prefix("hybrid:") {
            return Ok(Method::Hybrid(rest.parse()?));
        }
        Ok(match t.as_str() {
            "plugin-mle" | "mle" | "plugin" => Method::PluginMle,
            "ri" | "regression-impute" => Method::RegressionImpute,
            "weighting-m" | "w-m" => Method::WeightingM,
            "weighting-a" | "w-a" => Method::WeightingA,
            "eif1" => Method::Eif1,
            "eif2" => Method::Eif2,
            "eif2-wglm" | "eif2-weighted-glm" => Method::Eif2WeightedGlm,
            "tmle" => Method::Tmle,
            _ => {
                // Bare hybrid names such as "ri-w-w".
                if t.split('-').all(|p| p == "ri" || p == "w") && t.contains('-') {
                    return Ok(Method::Hybrid(t.parse()?));
                }
                return Err(Error::Config(format!("unknown method '{s}'")));
            }
        })
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Method {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Probability clipping level; 0 disables clipping.
    pub clip: f64,
    /// Monte Carlo draws per unit and level for continuous mediators.
    pub mc_draws: usize,
    pub seed: u64,
    pub tmle_link: TmleLink,
    pub weighted_glm: WeightedGlmVariant,
    pub ratio_source: RatioSource,
    /// Tolerance for the score-equation checks of the targeted estimators.
    pub score_tolerance: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            clip: 0.01,
            mc_draws: 200,
            seed: 20240521,
            tmle_link: TmleLink::Logit,
            weighted_glm: WeightedGlmVariant::FittingWeights,
            ratio_source: RatioSource::Odds,
            score_tolerance: 1e-8,
        }
    }
}

/// One targeting step of TMLE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fluctuation {
    pub level: usize,
    pub beta: f64,
    /// `P_n[w_k (response_k − μ_k^tmle)]` after the update.
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    /// Probabilities or density ratios that hit the clip bounds.
    pub clipped: usize,
    /// Probabilities or ratios checked against the clip bounds.
    pub clip_checks: usize,
    pub max_weight: f64,
    /// Sample means of the augmentation terms (weighted GLM and TMLE).
    pub augmentation_means: Vec<f64>,
    pub fluctuations: Vec<Fluctuation>,
    pub warnings: Vec<String>,
}

impl EstimateDiagnostics {
    pub fn clip_rate(&self) -> f64 {
        if self.clip_checks == 0 {
            0.0
        } else {
            self.clipped as f64 / self.clip_checks as f64
        }
    }

    pub fn absorb(&mut self, other: &EstimateDiagnostics) {
        self.clipped += other.clipped;
        self.clip_checks += other.clip_checks;
        self.max_weight = self.max_weight.max(other.max_weight);
        if self.augmentation_means.is_empty() {
            self.augmentation_means = other.augmentation_means.clone();
        } else {
            for (a, b) in self.augmentation_means.iter_mut().zip(&other.augmentation_means) {
                if b.abs() > a.abs() {
                    *a = *b;
                }
            }
        }
        self.fluctuations.extend(other.fluctuations.iter().cloned());
        for w in &other.warnings {
            if !self.warnings.contains(w) {
                self.warnings.push(w.clone());
            }
        }
    }
}

/// Point estimate of `θ_ā` with per-unit contributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmfEstimate {
    pub regime: Regime,
    pub method: String,
    pub theta: f64,
    /// Per-unit terms whose mean is `theta`.
    pub summands: Vec<f64>,
    /// Estimated influence-function values (mean zero), EIF methods only.
    pub eif: Option<Vec<f64>>,
    /// Per-fold estimates when cross-fitted.
    pub fold_thetas: Vec<f64>,
    pub diagnostics: EstimateDiagnostics,
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl GmfEstimate {
    pub(crate) fn build(
        regime: &Regime,
        method: &Method,
        summands: Vec<f64>,
        eif_terms: Option<Vec<f64>>,
        diagnostics: EstimateDiagnostics,
    ) -> GmfEstimate {
        let theta = mean(&summands);
        let eif = eif_terms.map(|s| s.iter().map(|v| v - theta).collect());
        GmfEstimate {
            regime: regime.clone(),
            method: method.to_string(),
            theta,
            summands,
            eif,
            fold_thetas: vec![],
            diagnostics,
        }
    }

    /// EIF values when available, otherwise the summands.
    pub fn per_unit(&self) -> &[f64] {
        self.eif.as_deref().unwrap_or(&self.summands)
    }

    /// Plug-in EIF variance of `theta`, if the method provides an EIF.
    pub fn variance(&self) -> Option<f64> {
        self.eif.as_deref().and_then(|e| crate::inference::eif_variance(e).ok())
    }
}
