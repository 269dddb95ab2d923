//! Generalized mediation functionals and path-specific effects for a binary
//! treatment acting through ordered mediator blocks.

pub mod cli;
pub mod config;
pub mod data;
pub mod effects;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod ingest;
pub mod nuisance;
pub mod report;
pub mod rng;
pub mod simulation;

pub use data::{standard_regimes, EffectKind, EffectSpec, GroupedData, MediatorBlock, ObservedData, Regime};
pub use effects::{decompose_ate, disparity_decompose, estimate_effect, Decomposition, DisparityOptions, EffectEstimate};
pub use error::{Category, Error, Result};
pub use estimators::{cross_fit, estimate, EstimationSettings, EstimatorOptions, GmfEstimate, Method};
pub use nuisance::{FitOptions, LearnerKind, LearnerPolicy};
