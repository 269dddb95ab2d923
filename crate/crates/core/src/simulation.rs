//! Synthetic data for robustness studies: the linear-Gaussian two-mediator
//! design, false covariates, potential-outcome oracles, closed-form true
//! nuisances, the case × estimator study grid, and a discrete group-disparity
//! design with enumerable truth.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standard_regimes, EffectKind, GroupedData, MediatorBlock, ObservedData, Regime, Unit};
use crate::effects::EffectEstimate;
use crate::error::{Error, Result};
use crate::estimators::{evaluate, EstimatorOptions, Method};
use crate::inference::wald_ci;
use crate::nuisance::glm::expit;
use crate::nuisance::{
    ChainMode, DesignSpec, Expansion, Family, FitOptions, FittedModel, LearnerChoice, LearnerKind, LearnerPolicy,
    NuisanceFitter, NuisanceSet, Response, Role,
};
use crate::rng;

/// Structural coefficients of the two-mediator design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpCoefficients {
    /// Loadings of `X_j` on `(U_1, U_2, U_3, U_XY)`.
    pub beta_x: [[f64; 4]; 4],
    /// `(1, X_1..X_4)`.
    pub beta_a: [f64; 5],
    /// `(1, X_1..X_4, A)`.
    pub beta_m1: [f64; 6],
    /// `(1, X_1..X_4, A, M_1)`.
    pub beta_m2: [f64; 7],
    /// `(1, U_XY, X_1..X_4, A, M_1, M_2)`.
    pub beta_y: [f64; 9],
}

impl Default for DgpCoefficients {
    fn default() -> Self {
        DgpCoefficients {
            beta_x: [
                [0.77, -0.86, 0.35, 0.88],
                [-0.99, -0.72, -0.1, 0.54],
                [-0.74, 0.1, 0.91, 0.46],
                [-0.21, -0.43, -0.21, -0.7],
            ],
            beta_a: [-0.36, -0.08, -0.06, 0.4, -0.14],
            beta_m1: [0.0, 0.3, 0.42, 0.48, 0.28, 0.41],
            beta_m2: [0.04, 0.2, 0.09, 0.12, 0.39, 0.34, 0.24],
            beta_y: [-0.27, -0.1, 0.25, 0.2, -0.08, 0.78, 0.76, -0.4, 0.96],
        }
    }
}

fn dot(coef: &[f64], x: &[f64]) -> f64 {
    coef.iter().zip(x).map(|(c, v)| c * v).sum()
}

impl DgpCoefficients {
    fn a_logit(&self, x: &[f64]) -> f64 {
        self.beta_a[0] + dot(&self.beta_a[1..5], x)
    }

    fn m1_mean(&self, x: &[f64], a: f64) -> f64 {
        self.beta_m1[0] + dot(&self.beta_m1[1..5], x) + self.beta_m1[5] * a
    }

    fn m2_mean(&self, x: &[f64], a: f64, m1: f64) -> f64 {
        self.beta_m2[0] + dot(&self.beta_m2[1..5], x) + self.beta_m2[5] * a + self.beta_m2[6] * m1
    }

    fn y_mean(&self, u: f64, x: &[f64], a: f64, m1: f64, m2: f64) -> f64 {
        let b = &self.beta_y;
        b[0] + b[1] * u + dot(&b[2..6], x) + b[6] * a + b[7] * m1 + b[8] * m2
    }

    /// Coefficients `c` with `E[U_XY | X = x] = c·x`.
    pub fn confounder_projection(&self) -> [f64; 4] {
        let b = DMatrix::from_fn(4, 4, |i, j| self.beta_x[i][j]);
        let s = &b * b.transpose() + DMatrix::identity(4, 4);
        let g = b.transpose() * s.try_inverse().expect("B Bᵀ + I is positive definite");
        [g[(3, 0)], g[(3, 1)], g[(3, 2)], g[(3, 3)]]
    }

    /// `θ_ā` by linear path tracing (all means of `X` and `U` are zero).
    pub fn path_tracing(&self, regime: &Regime) -> Result<f64> {
        if regime.k() != 2 {
            return Err(Error::Config(format!("this design has two mediators; regime {regime} has {}", regime.k())));
        }
        let (a1, a2, a3) = (regime.a(1), regime.a(2), regime.a(3));
        let em1 = self.beta_m1[0] + self.beta_m1[5] * a1;
        let em2 = self.beta_m2[0] + self.beta_m2[5] * a2 + self.beta_m2[6] * em1;
        Ok(self.beta_y[0] + self.beta_y[6] * a3 + self.beta_y[7] * em1 + self.beta_y[8] * em2)
    }

    /// Path-tracing value of a named effect.
    pub fn effect_truth(&self, kind: EffectKind) -> Result<f64> {
        let s = standard_regimes(2, kind)?;
        Ok(self.path_tracing(&s.comparison)? - self.path_tracing(&s.baseline)?)
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws `n` units. `U_XY` confounds `X` and `Y` but is not exported.
pub fn generate(coeffs: &DgpCoefficients, n: usize, seed: u64) -> Result<ObservedData> {
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let mut rng = rng::stream(seed, 0);
    let mut x = Array2::zeros((n, 4));
    let mut a = vec![0.0; n];
    let mut m1 = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let u: [f64; 4] = [normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)];
        let mut xi = [0.0; 4];
        for j in 0..4 {
            xi[j] = dot(&coeffs.beta_x[j], &u) + normal(&mut rng);
            x[(i, j)] = xi[j];
        }
        a[i] = f64::from(rng.gen::<f64>() < expit(coeffs.a_logit(&xi)));
        m1[i] = coeffs.m1_mean(&xi, a[i]) + normal(&mut rng);
        m2[i] = coeffs.m2_mean(&xi, a[i], m1[i]) + normal(&mut rng);
        y[i] = coeffs.y_mean(u[3], &xi, a[i], m1[i], m2[i]) + normal(&mut rng);
    }
    ObservedData::new(x, a, vec![MediatorBlock::continuous("m1", m1), MediatorBlock::continuous("m2", m2)], y)
}

/// `Z = (X1, e^{X2/2}, (X3/X1)^{1/3}, X4/(e^{X1/2}+1))` with a real cube
/// root. Rows with `X1 = 0` get `Z3 = 0`; their count is returned.
pub fn false_covariates(x: &Array2<f64>) -> Result<(Array2<f64>, usize)> {
    if x.ncols() != 4 {
        return Err(Error::Data(format!("false covariates need 4 columns, got {}", x.ncols())));
    }
    let mut zeros = 0;
    let mut z = Array2::zeros((x.nrows(), 4));
    for (i, row) in x.rows().into_iter().enumerate() {
        z[(i, 0)] = row[0];
        z[(i, 1)] = (row[1] / 2.0).exp();
        z[(i, 2)] = if row[0] == 0.0 {
            zeros += 1;
            0.0
        } else {
            (row[2] / row[0]).cbrt()
        };
        z[(i, 3)] = row[3] / ((row[0] / 2.0).exp() + 1.0);
    }
    if zeros > 0 {
        log::warn!("{zeros} rows with X1 = 0 had Z3 set to 0");
    }
    Ok((z, zeros))
}

/// Appends `Z` so that columns `0..4` are `X` and `4..8` are `Z`.
pub fn with_false_covariates(data: &ObservedData) -> Result<ObservedData> {
    let x4 = data.x().slice(ndarray::s![.., 0..4]).to_owned();
    let (z, _) = false_covariates(&x4)?;
    let names: Vec<String> = (1..=4).map(|j| format!("z{j}")).collect();
    data.with_extra_covariates(&z, &names)
}

pub const X_COLUMNS: [usize; 4] = [0, 1, 2, 3];
pub const Z_COLUMNS: [usize; 4] = [4, 5, 6, 7];

/// Monte Carlo average of nested potential outcomes `Y(a_3, M_1(a_1), M_2(a_2, M_1(a_1)))`.
/// Returns the mean and its Monte Carlo standard error.
pub fn oracle_truth(coeffs: &DgpCoefficients, regime: &Regime, draws: usize, seed: u64) -> Result<(f64, f64)> {
    oracle_contrast(coeffs, regime, None, draws, seed)
}

/// Oracle of `θ(comparison) − θ(baseline)` with common random numbers,
/// or of `θ(comparison)` alone when `baseline` is `None`.
pub fn oracle_contrast(
    coeffs: &DgpCoefficients,
    comparison: &Regime,
    baseline: Option<&Regime>,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if comparison.k() != 2 || baseline.is_some_and(|b| b.k() != 2) {
        return Err(Error::Config("oracle regimes must have length 3".into()));
    }
    if draws < 2 {
        return Err(Error::Config("oracle needs at least 2 draws".into()));
    }
    const CHUNK: usize = 10_000;
    let chunks = draws.div_ceil(CHUNK);
    let sums: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, c as u64);
            let len = CHUNK.min(draws - c * CHUNK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let u: [f64; 4] = [normal(&mut rng), normal(&mut rng), normal(&mut rng), normal(&mut rng)];
                let mut x = [0.0; 4];
                for j in 0..4 {
                    x[j] = dot(&coeffs.beta_x[j], &u) + normal(&mut rng);
                }
                let (e1, e2, ey) = (normal(&mut rng), normal(&mut rng), normal(&mut rng));
                let outcome = |r: &Regime| {
                    let m1 = coeffs.m1_mean(&x, r.a(1)) + e1;
                    let m2 = coeffs.m2_mean(&x, r.a(2), m1) + e2;
                    coeffs.y_mean(u[3], &x, r.a(3), m1, m2) + ey
                };
                let v = outcome(comparison) - baseline.map_or(0.0, outcome);
                s += v;
                s2 += v * v;
            }
            (s, s2, len)
        })
        .collect();
    let (s, s2, n) = sums.iter().fold((0.0, 0.0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1, acc.2 + v.2));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

/// Closed-form nuisance functions of the design for one regime. Covariates
/// are read from columns `0..4` of `X`.
#[derive(Debug, Clone)]
pub struct TrueNuisances {
    coeffs: DgpCoefficients,
    projection: [f64; 4],
    regime: Regime,
}

impl TrueNuisances {
    pub fn new(coeffs: &DgpCoefficients, regime: &Regime) -> Result<Self> {
        if regime.k() != 2 {
            return Err(Error::Config("true nuisances exist for two-mediator regimes only".into()));
        }
        Ok(TrueNuisances { coeffs: coeffs.clone(), projection: coeffs.confounder_projection(), regime: regime.clone() })
    }

    /// `P(A = 1 | X, M̄_k)`.
    pub fn pi(&self, k: usize, x: &[f64], m: &[f64]) -> f64 {
        let c = &self.coeffs;
        let mut eta = c.a_logit(x);
        if k >= 1 {
            let b = c.beta_m1[5];
            eta += b * (m[0] - c.m1_mean(x, 0.0) - b / 2.0);
        }
        if k >= 2 {
            let g = c.beta_m2[5];
            eta += g * (m[1] - c.m2_mean(x, 0.0, m[0]) - g / 2.0);
        }
        expit(eta)
    }

    /// `E[Y | X, A = a, M_1, M_2]`.
    pub fn outcome(&self, x: &[f64], a: f64, m1: f64, m2: f64) -> f64 {
        self.coeffs.y_mean(dot(&self.projection, x), x, a, m1, m2)
    }

    /// Chain function `μ_level` of the regime at history `m̄_level`.
    pub fn mu(&self, level: usize, x: &[f64], m: &[f64]) -> f64 {
        let r = &self.regime;
        let c = &self.coeffs;
        let m1 = if level >= 1 { m[0] } else { c.m1_mean(x, r.a(1)) };
        let m2 = if level >= 2 { m[1] } else { c.m2_mean(x, r.a(2), m1) };
        self.outcome(x, r.a(3), m1, m2)
    }

    /// Models wrapping the closed forms, laid out like fitted ones.
    pub fn nuisance_set(&self, data: &ObservedData, chain: ChainMode) -> Result<NuisanceSet> {
        let mut set = NuisanceSet::empty(self.regime.clone(), chain);
        let covs = X_COLUMNS.to_vec();
        for k in 0..=2 {
            let design = DesignSpec::new(data, covs.clone(), false, k, Expansion::Linear, Response::Treatment, Family::Binary)?;
            let me = self.clone();
            set.pi[k] = Some(Arc::new(FittedModel::from_function(design, format!("true pi{k}"), move |u: Unit<'_>| {
                me.pi(k, &u.x[..4], u.m)
            })));
        }
        for level in crate::nuisance::active_levels(&self.regime, chain) {
            let design = DesignSpec::new(
                data,
                covs.clone(),
                true,
                level,
                Expansion::Linear,
                Response::Outcome { level },
                Family::Continuous,
            )?;
            let me = self.clone();
            set.mu[level] = Some(Arc::new(FittedModel::from_function(
                design,
                format!("true mu{level}"),
                move |u: Unit<'_>| me.mu(level, &u.x[..4], u.m),
            )));
        }
        Ok(set)
    }
}

/// Specification scenario: which of the six nuisances use the true covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    A,
    B,
    C,
    D,
    E,
}

impl Case {
    pub const ALL: [Case; 5] = [Case::A, Case::B, Case::C, Case::D, Case::E];

    /// Whether `role` is correctly specified in this case.
    pub fn correct(self, role: Role) -> bool {
        use Role::*;
        match self {
            Case::A => matches!(role, Treatment(0..=2)),
            Case::B => matches!(role, Treatment(0) | Treatment(1) | Outcome(2)),
            Case::C => matches!(role, Treatment(0) | Outcome(1) | Outcome(2)),
            Case::D => matches!(role, Outcome(0..=2)),
            Case::E => false,
        }
    }

    /// Main-effects GLMs on `X` for the correct nuisances and on `Z` for the rest.
    pub fn policy(self) -> LearnerPolicy {
        let mut p = LearnerPolicy {
            default: LearnerChoice::on(LearnerKind::Glm, Z_COLUMNS.to_vec()),
            overrides: Default::default(),
        };
        for k in 0..=2 {
            for role in [Role::Treatment(k), Role::Outcome(k)] {
                let cols = if self.correct(role) { X_COLUMNS } else { Z_COLUMNS };
                p.overrides.insert(role, LearnerChoice::on(LearnerKind::Glm, cols.to_vec()));
            }
        }
        p
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Case::A => "a",
            Case::B => "b",
            Case::C => "c",
            Case::D => "d",
            Case::E => "e",
        };
        f.write_str(c)
    }
}

impl FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Case::A),
            "b" => Ok(Case::B),
            "c" => Ok(Case::C),
            "d" => Ok(Case::D),
            "e" => Ok(Case::E),
            _ => Err(Error::Config(format!("unknown case '{s}' (expected a-e)"))),
        }
    }
}

/// Estimators of the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyEstimator {
    WeightingA,
    Ri,
    RiWW,
    RiRiW,
    /// eif2 with GLM chain.
    ParEif2,
    /// eif2 with weighted-GLM chain.
    Par2Eif2,
    /// eif2 with stacked learners on `Z`.
    NpEif2 { cross_fit: bool },
    /// TMLE with stacked learners on `Z`.
    TmleEif2 { cross_fit: bool },
}

impl StudyEstimator {
    pub fn parametric() -> Vec<StudyEstimator> {
        use StudyEstimator::*;
        vec![WeightingA, Ri, RiWW, RiRiW, ParEif2, Par2Eif2]
    }

    pub fn all() -> Vec<StudyEstimator> {
        use StudyEstimator::*;
        let mut v = Self::parametric();
        v.extend([
            NpEif2 { cross_fit: true },
            NpEif2 { cross_fit: false },
            TmleEif2 { cross_fit: true },
            TmleEif2 { cross_fit: false },
        ]);
        v
    }

    pub fn is_nonparametric(self) -> bool {
        matches!(self, StudyEstimator::NpEif2 { .. } | StudyEstimator::TmleEif2 { .. })
    }

    pub fn method(self) -> Method {
        match self {
            StudyEstimator::WeightingA => Method::WeightingA,
            StudyEstimator::Ri => Method::RegressionImpute,
            StudyEstimator::RiWW => Method::Hybrid("ri-w-w".parse().expect("valid")),
            StudyEstimator::RiRiW => Method::Hybrid("ri-ri-w".parse().expect("valid")),
            StudyEstimator::ParEif2 | StudyEstimator::NpEif2 { .. } => Method::Eif2,
            StudyEstimator::Par2Eif2 => Method::Eif2WeightedGlm,
            StudyEstimator::TmleEif2 { .. } => Method::Tmle,
        }
    }
}

impl fmt::Display for StudyEstimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StudyEstimator::WeightingA => "w-a",
            StudyEstimator::Ri => "ri",
            StudyEstimator::RiWW => "ri-w-w",
            StudyEstimator::RiRiW => "ri-ri-w",
            StudyEstimator::ParEif2 => "par-eif2",
            StudyEstimator::Par2Eif2 => "par2-eif2",
            StudyEstimator::NpEif2 { cross_fit: true } => "np-eif2-cf",
            StudyEstimator::NpEif2 { cross_fit: false } => "np-eif2",
            StudyEstimator::TmleEif2 { cross_fit: true } => "tmle-eif2-cf",
            StudyEstimator::TmleEif2 { cross_fit: false } => "tmle-eif2",
        };
        f.write_str(s)
    }
}

impl FromStr for StudyEstimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        StudyEstimator::all()
            .into_iter()
            .find(|e| e.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown study estimator '{s}'")))
    }
}

/// Nonparametric cases are not split by specification; they report under this label.
pub const NONPARAMETRIC_CASE: &str = "np";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyGrid {
    pub cases: Vec<Case>,
    pub estimators: Vec<StudyEstimator>,
    pub reps: usize,
    pub n: usize,
    pub seed: u64,
    /// Folds for the cross-fitted nonparametric estimators.
    pub folds: usize,
    pub level: f64,
    pub coefficients: DgpCoefficients,
    /// Effect under study; cPSE through the second mediator by default.
    pub effect: EffectKind,
    /// Replaces `Y` by this constant (a degenerate check of the harness).
    pub constant_outcome: Option<f64>,
    pub estimator_options: EstimatorOptions,
}

impl Default for StudyGrid {
    fn default() -> Self {
        StudyGrid {
            cases: Case::ALL.to_vec(),
            estimators: StudyEstimator::parametric(),
            reps: 200,
            n: 2000,
            seed: 20240521,
            folds: 5,
            level: 0.95,
            coefficients: DgpCoefficients::default(),
            effect: EffectKind::Cpse(2),
            constant_outcome: None,
            estimator_options: EstimatorOptions::default(),
        }
    }
}

/// One long-format result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub case: String,
    pub estimator: String,
    pub replicate: usize,
    pub estimate: Option<f64>,
    pub se: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub covered: Option<bool>,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub case: String,
    pub estimator: String,
    pub reps: usize,
    pub failures: usize,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    /// Monte Carlo standard error of the mean estimate.
    pub mc_se: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub truth: f64,
    pub grid: StudyGrid,
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<StudySummary>,
}

impl StudyReport {
    pub fn summary(&self, case: &str, estimator: &str) -> Option<&StudySummary> {
        self.summaries.iter().find(|s| s.case == case && s.estimator == estimator)
    }

    /// Long-format CSV with the fixed column set.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["case", "estimator", "replicate", "estimate", "se", "ci_low", "ci_high", "covered", "failed"])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for r in &self.rows {
            w.write_record([
                r.case.clone(),
                r.estimator.clone(),
                r.replicate.to_string(),
                opt(r.estimate),
                opt(r.se),
                opt(r.ci_low),
                opt(r.ci_high),
                r.covered.map_or(String::new(), |c| c.to_string()),
                r.failed.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON summary (grid, truth and per-cell statistics, without rows).
    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Out<'a> {
            truth: f64,
            grid: &'a StudyGrid,
            summaries: &'a [StudySummary],
        }
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &Out { truth: self.truth, grid: &self.grid, summaries: &self.summaries })?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn row_from(case: &str, est: StudyEstimator, rep: usize, r: Result<EffectEstimate>, truth: f64) -> StudyRow {
    match r {
        Ok(e) => {
            let covered = e.ci.map(|(lo, hi)| lo <= truth && truth <= hi);
            StudyRow {
                case: case.to_string(),
                estimator: est.to_string(),
                replicate: rep,
                estimate: Some(e.point),
                se: e.se,
                ci_low: e.ci.map(|c| c.0),
                ci_high: e.ci.map(|c| c.1),
                covered,
                failed: false,
            }
        }
        Err(err) => {
            log::debug!("replicate {rep} {case}/{est} failed: {err}");
            StudyRow {
                case: case.to_string(),
                estimator: est.to_string(),
                replicate: rep,
                estimate: None,
                se: None,
                ci_low: None,
                ci_high: None,
                covered: None,
                failed: true,
            }
        }
    }
}

/// Stacked learners on the second-order expansion of `Z` for every nuisance.
pub fn nonparametric_policy() -> LearnerPolicy {
    LearnerPolicy { default: LearnerChoice::on(LearnerKind::Stack, Z_COLUMNS.to_vec()), overrides: Default::default() }
}

fn effect_with(
    fitter: &NuisanceFitter<'_>,
    data: &ObservedData,
    spec: &crate::data::EffectSpec,
    method: &Method,
    opts: &EstimatorOptions,
    level: f64,
) -> Result<EffectEstimate> {
    let c = evaluate(fitter, data, &spec.comparison, method, opts)?;
    let b = evaluate(fitter, data, &spec.baseline, method, opts)?;
    EffectEstimate::from_estimates(spec.clone(), &c, &b, level)
}

/// Rows for one replicate of the grid.
pub fn run_replicate(grid: &StudyGrid, rep: usize, truth: f64) -> Result<Vec<StudyRow>> {
    let spec = standard_regimes(2, grid.effect)?;
    let base = generate(&grid.coefficients, grid.n, rng::derive(grid.seed, rep as u64))?;
    let base = match grid.constant_outcome {
        Some(c) => base.with_outcome(vec![c; grid.n])?,
        None => base,
    };
    let data = with_false_covariates(&base)?;
    let opts = EstimatorOptions { seed: rng::derive(grid.estimator_options.seed, rep as u64), ..grid.estimator_options.clone() };
    let fit = FitOptions { seed: rng::derive(grid.seed ^ 0xF17, rep as u64), ..FitOptions::default() };
    let mut rows = Vec::new();
    let parametric: Vec<StudyEstimator> = grid.estimators.iter().copied().filter(|e| !e.is_nonparametric()).collect();
    if !parametric.is_empty() {
        for &case in &grid.cases {
            let fitter = NuisanceFitter::new(&data, case.policy(), fit.clone());
            for &est in &parametric {
                let r = effect_with(&fitter, &data, &spec, &est.method(), &opts, grid.level);
                rows.push(row_from(&case.to_string(), est, rep, r, truth));
            }
        }
    }
    let np: Vec<StudyEstimator> = grid.estimators.iter().copied().filter(|e| e.is_nonparametric()).collect();
    if !np.is_empty() {
        let plain = NuisanceFitter::new(&data, nonparametric_policy(), fit.clone());
        for est in np {
            let cross_fit = matches!(est, StudyEstimator::NpEif2 { cross_fit: true } | StudyEstimator::TmleEif2 { cross_fit: true });
            let r = if cross_fit {
                let settings = crate::estimators::EstimationSettings {
                    policy: nonparametric_policy(),
                    fit: fit.clone(),
                    estimator: opts.clone(),
                    folds: grid.folds,
                };
                crate::effects::estimate_effect(&data, &spec, &est.method(), &settings).map(|mut e| {
                    if let Some(se) = e.se {
                        e.ci = Some(wald_ci(e.point, se * se, grid.level));
                    }
                    e
                })
            } else {
                effect_with(&plain, &data, &spec, &est.method(), &opts, grid.level)
            };
            rows.push(row_from(NONPARAMETRIC_CASE, est, rep, r, truth));
        }
    }
    Ok(rows)
}

/// Per-cell summaries of long-format rows.
pub fn summarize(rows: &[StudyRow], truth: f64) -> Vec<StudySummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.case.clone(), r.estimator.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(case, estimator)| {
            let cell: Vec<&StudyRow> = rows.iter().filter(|r| r.case == case && r.estimator == estimator).collect();
            let est: Vec<f64> = cell.iter().filter_map(|r| r.estimate).collect();
            let m = est.len() as f64;
            let mean = est.iter().sum::<f64>() / m;
            let sd = if est.len() > 1 {
                (est.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
            } else {
                0.0
            };
            let rmse = (est.iter().map(|v| (v - truth).powi(2)).sum::<f64>() / m).sqrt();
            let cov: Vec<bool> = cell.iter().filter_map(|r| r.covered).collect();
            StudySummary {
                reps: cell.len(),
                failures: cell.iter().filter(|r| r.failed).count(),
                mean,
                bias: mean - truth,
                sd,
                rmse,
                mc_se: sd / m.sqrt(),
                coverage: (!cov.is_empty()).then(|| cov.iter().filter(|&&c| c).count() as f64 / cov.len() as f64),
                case,
                estimator,
            }
        })
        .collect()
}

/// Runs every replicate of the grid (in parallel) and summarizes.
pub fn run_study(grid: &StudyGrid) -> Result<StudyReport> {
    if grid.reps == 0 || grid.n < 10 {
        return Err(Error::Config("study needs reps ≥ 1 and n ≥ 10".into()));
    }
    if grid.estimators.is_empty() {
        return Err(Error::Config("study needs at least one estimator".into()));
    }
    let truth = match grid.constant_outcome {
        Some(_) => 0.0,
        None => grid.coefficients.effect_truth(grid.effect)?,
    };
    let per_rep = (0..grid.reps)
        .into_par_iter()
        .map(|rep| run_replicate(grid, rep, truth))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<StudyRow> = per_rep.into_iter().flatten().collect();
    let summaries = summarize(&rows, truth);
    Ok(StudyReport { truth, grid: grid.clone(), rows, summaries })
}

/// Discrete group-disparity design: `G ~ Bernoulli(p)`, `M_1 | G` and
/// `M_2 | G, M_1` categorical on `{0, 1, 2}`, `Y | G, M_1, M_2` Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityDgp {
    pub p_group: f64,
    /// `P(M_1 = v | G = g)` as `m1[g][v]`.
    pub m1: [[f64; 3]; 2],
    /// `P(M_2 = v | G = g, M_1 = u)` as `m2[g][u][v]`.
    pub m2: [[[f64; 3]; 3]; 2],
    /// `E[Y | G = g, M_1 = u, M_2 = v]` as `y[g][u][v]`.
    pub y: [[[f64; 3]; 3]; 2],
    pub sd: f64,
}

impl Default for DisparityDgp {
    fn default() -> Self {
        DisparityDgp {
            p_group: 0.4,
            m1: [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]],
            m2: [
                [[0.6, 0.3, 0.1], [0.3, 0.5, 0.2], [0.1, 0.3, 0.6]],
                [[0.2, 0.2, 0.6], [0.5, 0.2, 0.3], [0.1, 0.6, 0.3]],
            ],
            y: [
                [[0.0, 0.5, 0.2], [0.8, 0.1, 1.2], [0.3, 1.5, 0.4]],
                [[0.4, 1.6, 0.3], [0.2, 2.0, 0.9], [2.2, 0.1, 1.4]],
            ],
            sd: 1.0,
        }
    }
}

impl DisparityDgp {
    fn draw<R: Rng>(rng: &mut R, p: &[f64; 3]) -> usize {
        let u: f64 = rng.gen();
        if u < p[0] {
            0
        } else if u < p[0] + p[1] {
            1
        } else {
            2
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<GroupedData> {
        let mut rng = rng::stream(seed, 0);
        let mut g = Vec::with_capacity(n);
        let (mut m1, mut m2, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let gi = usize::from(rng.gen::<f64>() < self.p_group);
            let u = Self::draw(&mut rng, &self.m1[gi]);
            let v = Self::draw(&mut rng, &self.m2[gi][u]);
            g.push(gi as f64);
            m1.push(u as f64);
            m2.push(v as f64);
            y.push(self.y[gi][u][v] + self.sd * normal(&mut rng));
        }
        GroupedData::new(g, vec![MediatorBlock::discrete("m1", m1), MediatorBlock::discrete("m2", m2)], y)
    }

    /// `θ` for the regime `(g_1, g_2, g_3)`: mediator `k` follows group `g_k`'s
    /// law and the outcome follows group `g_3`'s.
    pub fn truth(&self, regime: &Regime) -> f64 {
        let g = |k: usize| regime.a(k) as usize;
        let mut t = 0.0;
        for u in 0..3 {
            for v in 0..3 {
                t += self.m1[g(1)][u] * self.m2[g(2)][u][v] * self.y[g(3)][u][v];
            }
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_tracing_matches_hand_values() {
        let c = DgpCoefficients::default();
        assert!((c.effect_truth(EffectKind::Cpse(2)).unwrap() - 0.34 * 0.96).abs() < 1e-12);
        assert!((c.effect_truth(EffectKind::Nde).unwrap() - 0.76).abs() < 1e-12);
        assert!((c.effect_truth(EffectKind::TieM1).unwrap() - 0.41 * (-0.4 + 0.24 * 0.96)).abs() < 1e-12);
    }

    #[test]
    fn false_covariate_examples() {
        let x = ndarray::array![[1.0, 0.0, 0.0, 0.0], [1.0, 0.0, -1.0, 0.0], [0.0, 0.0, 5.0, 1.0]];
        let (z, zeros) = false_covariates(&x).unwrap();
        assert_eq!(z.row(0).to_vec(), vec![1.0, 1.0, 0.0, 0.0]);
        assert!((z[(1, 2)] + 1.0).abs() < 1e-15);
        assert_eq!(z[(2, 2)], 0.0);
        assert_eq!(zeros, 1);
    }

    #[test]
    fn case_map_matches_definitions() {
        use Role::*;
        let correct = |c: Case| -> Vec<Role> {
            [Treatment(0), Treatment(1), Treatment(2), Outcome(0), Outcome(1), Outcome(2)]
                .into_iter()
                .filter(|r| c.correct(*r))
                .collect()
        };
        assert_eq!(correct(Case::A), vec![Treatment(0), Treatment(1), Treatment(2)]);
        assert_eq!(correct(Case::B), vec![Treatment(0), Treatment(1), Outcome(2)]);
        assert_eq!(correct(Case::C), vec![Treatment(0), Outcome(1), Outcome(2)]);
        assert_eq!(correct(Case::D), vec![Outcome(0), Outcome(1), Outcome(2)]);
        assert!(correct(Case::E).is_empty());
    }

    #[test]
    fn disparity_truth_endpoints_are_group_means() {
        let d = DisparityDgp::default();
        let ones = Regime::constant(2, 1);
        let direct: f64 = (0..3)
            .flat_map(|u| (0..3).map(move |v| (u, v)))
            .map(|(u, v)| d.m1[1][u] * d.m2[1][u][v] * d.y[1][u][v])
            .sum();
        assert!((d.truth(&ones) - direct).abs() < 1e-15);
    }
}
