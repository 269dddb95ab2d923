//! TOML run configuration and its resolution against a loaded dataset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{standard_regimes, EffectKind, EffectSpec, ObservedData, Regime};
use crate::error::{Error, Result};
use crate::ingest::DataSpec;
use crate::nuisance::{ChainMode, LearnerChoice, LearnerKind, LearnerPolicy, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inference {
    #[default]
    Eif,
    Bootstrap,
}

impl std::str::FromStr for Inference {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eif" => Ok(Inference::Eif),
            "bootstrap" => Ok(Inference::Bootstrap),
            other => Err(Error::Config(format!("unknown inference '{other}' (expected eif or bootstrap)"))),
        }
    }
}

/// `"NDE"`, `"cPSE_M2"`, … or an explicit regime pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EffectEntry {
    Named(String),
    Custom { comparison: String, baseline: String },
}

impl EffectEntry {
    pub fn resolve(&self, k: usize) -> Result<EffectSpec> {
        match self {
            EffectEntry::Named(name) => {
                let kind: EffectKind = name.parse()?;
                if kind == EffectKind::Custom {
                    return Err(Error::Config("custom effects need comparison and baseline regimes".into()));
                }
                standard_regimes(k, kind)
            }
            EffectEntry::Custom { comparison, baseline } => {
                let c: Regime = comparison.parse()?;
                let b: Regime = baseline.parse()?;
                if c.k() != k || b.k() != k {
                    return Err(Error::Config(format!(
                        "regimes {c} and {b} need {} entries for {k} mediator blocks",
                        k + 1
                    )));
                }
                EffectSpec::custom(c, b)
            }
        }
    }
}

impl std::str::FromStr for EffectEntry {
    type Err = Error;
    /// `"NDE"` or `"011-001"` (comparison minus baseline).
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once('-') {
            Some((c, b)) if c.chars().chain(b.chars()).all(|ch| matches!(ch, '0' | '1' | ',')) && !c.is_empty() => {
                Ok(EffectEntry::Custom { comparison: c.to_string(), baseline: b.to_string() })
            }
            _ => Ok(EffectEntry::Named(s.trim().to_string())),
        }
    }
}

/// A learner name, or a learner with a predictor subset given by column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LearnerEntry {
    Name(String),
    Detailed { learner: String, covariates: Option<Vec<String>> },
}

impl LearnerEntry {
    fn resolve(&self, names: &[String]) -> Result<LearnerChoice> {
        let (learner, covs) = match self {
            LearnerEntry::Name(n) => (n, None),
            LearnerEntry::Detailed { learner, covariates } => (learner, covariates.as_ref()),
        };
        let learner: LearnerKind = learner.parse()?;
        let covariates = covs
            .map(|list| {
                list.iter()
                    .map(|c| {
                        names
                            .iter()
                            .position(|n| n == c)
                            .ok_or_else(|| Error::Config(format!("learner covariate '{c}' is not a declared covariate")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Ok(LearnerChoice { learner, covariates })
    }

    fn has_subset(&self) -> bool {
        matches!(self, LearnerEntry::Detailed { covariates: Some(_), .. })
    }
}

/// Contents of a run configuration file. Every field can be overridden by a
/// command-line flag.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One path per imputed dataset; several are Rubin-pooled.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    pub data: Option<DataSpec>,
    pub method: Option<String>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub clip: Option<f64>,
    pub level: Option<f64>,
    pub inference: Option<Inference>,
    pub bootstrap_replicates: Option<usize>,
    pub chain: Option<ChainMode>,
    #[serde(default)]
    pub effects: Vec<EffectEntry>,
    /// Flip order for decompositions, e.g. `[3, 2, 1]`.
    pub ordering: Option<Vec<usize>>,
    /// `default` plus per-nuisance entries keyed `pi0`, `mu2`, `f1`, ...
    #[serde(default)]
    pub learners: BTreeMap<String, LearnerEntry>,
    /// Marks a deliberate misspecification experiment.
    pub misspecified: Option<bool>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display()))))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Learner policy with covariate names mapped to column indices.
    pub fn policy(&self, covariate_names: &[String]) -> Result<LearnerPolicy> {
        let mut policy = LearnerPolicy::default();
        for (key, entry) in &self.learners {
            let choice = entry.resolve(covariate_names)?;
            if key == "default" {
                policy.default = choice;
            } else {
                let role: Role = key.parse()?;
                policy.overrides.insert(role, choice);
            }
        }
        Ok(policy)
    }

    /// True when learners use predictor subsets or the run is flagged as misspecified.
    pub fn misspecification_flags(&self) -> bool {
        self.misspecified.unwrap_or(false) || self.learners.values().any(LearnerEntry::has_subset)
    }

    /// Effect specs for `data`; at least one is required.
    pub fn effect_specs(&self, data: &ObservedData) -> Result<Vec<EffectSpec>> {
        if self.effects.is_empty() {
            return Err(Error::Config("at least one effect is required".into()));
        }
        self.effects.iter().map(|e| e.resolve(data.k())).collect()
    }
}
