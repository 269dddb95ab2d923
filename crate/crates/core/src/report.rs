//! JSON reports written by the command-line tool. The layout is pinned by
//! `schema/report.schema.json`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::PositivityFlag;
use crate::effects::EffectEstimate;
use crate::error::Result;
use crate::inference::{wald_p_value, PooledEstimate, ADAPTIVE_BOOTSTRAP_WARNING};

pub const SCHEMA_VERSION: u32 = 1;

/// The published report schema.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Non-robust variance caveat attached to misspecification experiments.
pub const VARIANCE_CAVEAT: &str =
    "the EIF variance estimator is not multiply robust; intervals may be invalid when nuisance models are misspecified";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningCode {
    ClipRate,
    Compatibility,
    BootstrapAdaptive,
    VarianceNotRobust,
    Estimation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: WarningCode,
    pub message: String,
}

impl Warning {
    pub fn new(code: WarningCode, message: impl Into<String>) -> Self {
        Warning { code, message: message.into() }
    }

    /// Assigns a code to a free-text warning from the estimation layer.
    pub fn classify(message: &str) -> Self {
        let code = if message.contains("not nested") {
            WarningCode::Compatibility
        } else if message == ADAPTIVE_BOOTSTRAP_WARNING {
            WarningCode::BootstrapAdaptive
        } else {
            WarningCode::Estimation
        };
        Warning::new(code, message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolingInfo {
    pub imputations: usize,
    pub within: f64,
    pub between: f64,
    pub total: f64,
    /// `None` when the between-imputation variance is zero.
    pub df: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInfo {
    pub replicates: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectReport {
    pub label: String,
    pub comparison: String,
    pub baseline: String,
    pub method: String,
    pub point: f64,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub p_value: Option<f64>,
    pub level: f64,
    pub theta_comparison: f64,
    pub theta_baseline: f64,
    pub pooling: Option<PoolingInfo>,
    pub bootstrap: Option<BootstrapInfo>,
}

impl EffectReport {
    pub fn from_estimate(e: &EffectEstimate) -> Self {
        EffectReport {
            label: e.label.clone(),
            comparison: e.spec.comparison.to_string(),
            baseline: e.spec.baseline.to_string(),
            method: e.method.clone(),
            point: e.point,
            se: e.se,
            ci_low: e.ci.map(|c| c.0),
            ci_high: e.ci.map(|c| c.1),
            p_value: e.se.filter(|s| *s > 0.0).map(|s| wald_p_value(e.point, s)),
            level: e.level,
            theta_comparison: e.theta_comparison,
            theta_baseline: e.theta_baseline,
            pooling: None,
            bootstrap: None,
        }
    }

    /// Replaces the point and interval by Rubin-pooled values. `thetas` are
    /// the pooled comparison and baseline means.
    pub fn pooled(first: &EffectEstimate, pooled: &PooledEstimate, thetas: (f64, f64), with_se: bool) -> Self {
        let mut r = EffectReport::from_estimate(first);
        r.point = pooled.point;
        r.theta_comparison = thetas.0;
        r.theta_baseline = thetas.1;
        if with_se {
            let (lo, hi) = pooled.interval(first.level);
            r.se = Some(pooled.se);
            r.ci_low = Some(lo);
            r.ci_high = Some(hi);
            r.p_value = (pooled.se > 0.0).then(|| pooled.p_value());
        } else {
            r.se = None;
            r.ci_low = None;
            r.ci_high = None;
            r.p_value = None;
        }
        r.pooling = Some(PoolingInfo {
            imputations: pooled.m,
            within: pooled.within,
            between: pooled.between,
            total: pooled.total,
            df: pooled.df.is_finite().then_some(pooled.df),
        });
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub ate: EffectReport,
    pub components: Vec<EffectReport>,
    pub ordering: Vec<usize>,
    pub telescoping_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerEntryReport {
    pub role: String,
    pub learner: String,
    /// Covariate names; `None` means all.
    pub covariates: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceReport {
    pub chain: String,
    pub learners: Vec<LearnerEntryReport>,
    pub fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFlag {
    pub input: usize,
    #[serde(flatten)]
    pub flag: PositivityFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub clipped: usize,
    pub clip_checks: usize,
    pub clip_rate: f64,
    pub max_weight: f64,
    pub positivity_flags: Vec<InputFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub method: String,
    pub inputs: Vec<String>,
    /// Row count of each input.
    pub n: Vec<usize>,
    pub k: usize,
    pub folds: usize,
    pub seed: u64,
    pub clip: f64,
    pub level: f64,
    pub inference: String,
    pub effects: Vec<EffectReport>,
    pub decomposition: Option<DecompositionReport>,
    pub nuisances: NuisanceReport,
    pub diagnostics: DiagnosticsReport,
    pub warnings: Vec<Warning>,
}

impl Report {
    pub fn push_warning(&mut self, w: Warning) {
        if !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}
