//! Nuisance models: treatment probabilities `π_k`, the outcome chain `μ_k`
//! and mediator densities `f_k`.
//!
//! [`NuisanceFitter`] owns a training sample and a learner policy and fits
//! models on demand, caching each by a key that identifies the function it
//! estimates. Regimes that share a model therefore share the fit, which is
//! what lets an effect contrast or an ATE ladder avoid duplicate work.
//!
//! Outcome chains are "collapsed" by default: level `k` is only fitted when
//! `a_k ≠ a_{k+1}` (plus level 0), since `μ_k = E[μ_{k+1} | X, a_{k+1}, M̄_k]`
//! and `μ_{k-1} = E[μ_k | X, a_k, M̄_{k-1}]` with `a_k = a_{k+1}` compose into
//! a single regression. Likewise `π_k` only enters through the odds ratio
//! `π_k(a_k)/π_k(a_{k+1})`, which is 1 when the two arms agree.

pub mod boost;
pub mod density;
pub mod design;
pub mod folds;
pub mod glm;
pub mod learner;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use ndarray::Axis;
use serde::{Deserialize, Serialize};

pub use density::{fit_density, DensityModel};
pub use design::{DesignSpec, Expansion, Response};
pub use folds::{make_folds, FoldPlan};
pub use glm::{fit_linear, fit_logistic, Family, GlmFit};
pub use learner::{fit_learner, LearnerFit, LearnerKind, LearnerSettings};

use crate::data::{ObservedData, Regime, Unit};
use crate::error::{Error, Result};
use crate::rng;

/// Which nuisance function a learner choice applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    /// `π_k(a | x, m̄_k)`.
    Treatment(usize),
    /// `μ_k(x, m̄_k)`.
    Outcome(usize),
    /// `f_k(m_k | x, a, m̄_{k-1})`.
    Density(usize),
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Role::Treatment(k) => write!(f, "pi{k}"),
            Role::Outcome(k) => write!(f, "mu{k}"),
            Role::Density(k) => write!(f, "f{k}"),
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let parse = |rest: &str| rest.parse::<usize>().map_err(|_| Error::Config(format!("bad nuisance name '{s}'")));
        if let Some(r) = s.strip_prefix("pi") {
            Ok(Role::Treatment(parse(r)?))
        } else if let Some(r) = s.strip_prefix("mu") {
            Ok(Role::Outcome(parse(r)?))
        } else if let Some(r) = s.strip_prefix('f') {
            Ok(Role::Density(parse(r)?))
        } else {
            Err(Error::Config(format!("bad nuisance name '{s}' (expected piK, muK or fK)")))
        }
    }
}

/// Learner and predictor subset for one nuisance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerChoice {
    pub learner: LearnerKind,
    /// Covariate column indices; `None` means every covariate.
    pub covariates: Option<Vec<usize>>,
}

impl LearnerChoice {
    pub fn new(learner: LearnerKind) -> Self {
        LearnerChoice { learner, covariates: None }
    }

    pub fn on(learner: LearnerKind, covariates: Vec<usize>) -> Self {
        LearnerChoice { learner, covariates: Some(covariates) }
    }
}

/// Per-nuisance learner choices with a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerPolicy {
    pub default: LearnerChoice,
    pub overrides: BTreeMap<Role, LearnerChoice>,
}

impl LearnerPolicy {
    pub fn uniform(learner: LearnerKind) -> Self {
        LearnerPolicy { default: LearnerChoice::new(learner), overrides: BTreeMap::new() }
    }

    pub fn with(mut self, role: Role, choice: LearnerChoice) -> Self {
        self.overrides.insert(role, choice);
        self
    }

    pub fn choice(&self, role: Role) -> &LearnerChoice {
        self.overrides.get(&role).unwrap_or(&self.default)
    }

    /// True when any choice uses a data-adaptive learner.
    pub fn is_adaptive(&self) -> bool {
        self.default.learner.is_adaptive() || self.overrides.values().any(|c| c.learner.is_adaptive())
    }
}

impl Default for LearnerPolicy {
    fn default() -> Self {
        LearnerPolicy::uniform(LearnerKind::Glm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChainMode {
    /// Skip levels whose adjacent regime entries agree.
    #[default]
    Collapsed,
    /// Fit every level `0..=K`.
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeFit {
    /// One regression with `A` as a predictor, evaluated at the regime's arm.
    #[default]
    Pooled,
    /// Regression on the units in the regime's arm only, without `A`.
    ArmRestricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub learner: LearnerSettings,
    pub chain: ChainMode,
    pub outcome_fit: OutcomeFit,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            learner: LearnerSettings::default(),
            chain: ChainMode::Collapsed,
            outcome_fit: OutcomeFit::Pooled,
            seed: 20240521,
        }
    }
}

/// Levels `k` of the outcome chain that must be fitted for `regime`.
pub fn active_levels(regime: &Regime, chain: ChainMode) -> Vec<usize> {
    let k = regime.k();
    match chain {
        ChainMode::Full => (0..=k).collect(),
        ChainMode::Collapsed => std::iter::once(0)
            .chain((1..=k).filter(|&j| regime.a(j) != regime.a(j + 1)))
            .collect(),
    }
}

/// Treatment models `π_j` that enter the weights for `regime`.
pub fn needed_treatments(regime: &Regime, chain: ChainMode) -> Vec<usize> {
    active_levels(regime, chain)
}

type ModelFn = dyn Fn(Unit<'_>) -> f64 + Send + Sync;

enum Payload {
    Learner { kind: LearnerKind, fit: LearnerFit },
    Function(Arc<ModelFn>),
}

/// An immutable fitted regression. Binary-family predictions are probabilities.
pub struct FittedModel {
    design: DesignSpec,
    payload: Payload,
    label: String,
    fit_rows: usize,
}

impl fmt::Debug for FittedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FittedModel")
            .field("label", &self.label)
            .field("learner", &self.learner())
            .field("design", &self.design)
            .finish()
    }
}

/// Reusable buffers for predictions in hot loops.
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    base: Vec<f64>,
    work: Vec<f64>,
}

impl FittedModel {
    /// Wraps a known function (e.g. a true nuisance from a simulation).
    pub fn from_function<F>(design: DesignSpec, label: impl Into<String>, f: F) -> Self
    where
        F: Fn(Unit<'_>) -> f64 + Send + Sync + 'static,
    {
        FittedModel { design, payload: Payload::Function(Arc::new(f)), label: label.into(), fit_rows: 0 }
    }

    pub(crate) fn from_learner(design: DesignSpec, kind: LearnerKind, fit: LearnerFit, label: String, rows: usize) -> Self {
        FittedModel { design, payload: Payload::Learner { kind, fit }, label, fit_rows: rows }
    }

    pub fn design(&self) -> &DesignSpec {
        &self.design
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn learner(&self) -> Option<LearnerKind> {
        match &self.payload {
            Payload::Learner { kind, .. } => Some(*kind),
            Payload::Function(_) => None,
        }
    }

    pub fn learner_fit(&self) -> Option<&LearnerFit> {
        match &self.payload {
            Payload::Learner { fit, .. } => Some(fit),
            Payload::Function(_) => None,
        }
    }

    pub fn fit_rows(&self) -> usize {
        self.fit_rows
    }

    pub fn predict_with(&self, unit: Unit<'_>, scratch: &mut Scratch) -> f64 {
        match &self.payload {
            Payload::Learner { fit, .. } => {
                self.design.fill_base(unit, &mut scratch.base);
                fit.predict(&scratch.base, &mut scratch.work)
            }
            Payload::Function(f) => f(unit),
        }
    }

    pub fn predict(&self, unit: Unit<'_>) -> f64 {
        self.predict_with(unit, &mut Scratch::default())
    }

    /// Predictions for every row of `data` with `A` set to `a` (or observed if `None`).
    pub fn predict_rows(&self, data: &ObservedData, a: Option<f64>) -> Vec<f64> {
        let mut s = Scratch::default();
        (0..data.n())
            .map(|i| self.predict_with(data.unit_at(i, a.unwrap_or(data.a(i))), &mut s))
            .collect()
    }
}

/// Cache key naming the function a model estimates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NuisanceKey {
    Treatment(usize),
    /// `μ_level` for regime suffix `(a_{level+1}, …, a_{K+1})`.
    Outcome { level: usize, suffix: Vec<u8> },
    Density(usize),
    Custom(String),
}

impl fmt::Display for NuisanceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NuisanceKey::Treatment(k) => write!(f, "pi{k}"),
            NuisanceKey::Outcome { level, suffix } => {
                write!(f, "mu{level}[")?;
                for v in suffix {
                    write!(f, "{v}")?;
                }
                write!(f, "]")
            }
            NuisanceKey::Density(k) => write!(f, "f{k}"),
            NuisanceKey::Custom(s) => write!(f, "{s}"),
        }
    }
}

/// Keys of the chain and treatment models the EIF estimators need for `regime`.
pub fn chain_keys(regime: &Regime, chain: ChainMode) -> Vec<NuisanceKey> {
    let mut keys: Vec<NuisanceKey> = needed_treatments(regime, chain).into_iter().map(NuisanceKey::Treatment).collect();
    for level in active_levels(regime, chain) {
        keys.push(NuisanceKey::Outcome { level, suffix: regime.assignments()[level..].to_vec() });
    }
    keys
}

/// Fits nuisance models on one training sample, on demand and cached.
pub struct NuisanceFitter<'d> {
    data: &'d ObservedData,
    policy: LearnerPolicy,
    options: FitOptions,
    models: Mutex<HashMap<NuisanceKey, Arc<FittedModel>>>,
    densities: Mutex<HashMap<usize, Arc<DensityModel>>>,
    fits: AtomicUsize,
    warnings: Mutex<Vec<String>>,
}

impl<'d> NuisanceFitter<'d> {
    pub fn new(data: &'d ObservedData, policy: LearnerPolicy, options: FitOptions) -> Self {
        NuisanceFitter {
            data,
            policy,
            options,
            models: Mutex::new(HashMap::new()),
            densities: Mutex::new(HashMap::new()),
            fits: AtomicUsize::new(0),
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub fn data(&self) -> &'d ObservedData {
        self.data
    }

    pub fn policy(&self) -> &LearnerPolicy {
        &self.policy
    }

    pub fn options(&self) -> &FitOptions {
        &self.options
    }

    /// Number of models fitted so far (cache misses).
    pub fn fit_count(&self) -> usize {
        self.fits.load(Ordering::SeqCst)
    }

    pub fn keys(&self) -> Vec<NuisanceKey> {
        let mut k: Vec<NuisanceKey> = self.models.lock().expect("poisoned").keys().cloned().collect();
        k.extend(self.densities.lock().expect("poisoned").keys().map(|&b| NuisanceKey::Density(b)));
        k.sort();
        k
    }

    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("poisoned").clone()
    }

    pub(crate) fn warn(&self, msg: String) {
        let mut w = self.warnings.lock().expect("poisoned");
        if !w.contains(&msg) {
            log::warn!("{msg}");
            w.push(msg);
        }
    }

    /// Looks up a cached model, if any.
    pub fn cached(&self, key: &NuisanceKey) -> Option<Arc<FittedModel>> {
        self.models.lock().expect("poisoned").get(key).cloned()
    }

    /// Seeds the cache with a model, e.g. a known true nuisance.
    pub fn insert(&self, key: NuisanceKey, model: Arc<FittedModel>) {
        self.models.lock().expect("poisoned").insert(key, model);
    }

    fn covariates(&self, choice: &LearnerChoice) -> Vec<usize> {
        choice.covariates.clone().unwrap_or_else(|| (0..self.data.p()).collect())
    }

    fn outcome_family(&self) -> Family {
        if self.data.binary_outcome() {
            Family::Binary
        } else {
            Family::Continuous
        }
    }

    fn store(&self, key: NuisanceKey, model: FittedModel) -> Arc<FittedModel> {
        let arc = Arc::new(model);
        let mut m = self.models.lock().expect("poisoned");
        if let Some(existing) = m.get(&key) {
            return existing.clone();
        }
        self.fits.fetch_add(1, Ordering::SeqCst);
        m.insert(key, arc.clone());
        arc
    }

    /// Core fit: `response` over `rows` (all rows if `None`).
    #[allow(clippy::too_many_arguments)]
    fn fit_design(
        &self,
        role: Role,
        treatment: bool,
        blocks: usize,
        response: &[f64],
        rows: Option<&[usize]>,
        weights: Option<&[f64]>,
        family: Family,
        label: String,
    ) -> Result<FittedModel> {
        let choice = self.policy.choice(role).clone();
        let expansion = if choice.learner == LearnerKind::Glm2 { Expansion::Quadratic } else { Expansion::Linear };
        let resp_kind = match role {
            Role::Treatment(_) => Response::Treatment,
            Role::Outcome(level) => Response::Outcome { level },
            Role::Density(block) => Response::Mediator { block },
        };
        let design = DesignSpec::new(self.data, self.covariates(&choice), treatment, blocks, expansion, resp_kind, family)
            .map_err(|e| e.in_nuisance(label.clone()))?;
        let base = design.base_matrix(self.data, rows, None);
        let seed = rng::derive_tag(self.options.seed, &label);
        let fit = fit_learner(choice.learner, &base, response, weights, family, &self.options.learner, seed)
            .map_err(|e| e.in_nuisance(label.clone()))?;
        Ok(FittedModel::from_learner(design, choice.learner, fit, label, base.len_of(Axis(0))))
    }

    /// `π_k(1 | x, m̄_k)`.
    pub fn treatment(&self, k: usize) -> Result<Arc<FittedModel>> {
        let key = NuisanceKey::Treatment(k);
        if let Some(m) = self.cached(&key) {
            return Ok(m);
        }
        let model = self.fit_design(
            Role::Treatment(k),
            false,
            k,
            self.data.treatment(),
            None,
            None,
            Family::Binary,
            format!("pi{k}"),
        )?;
        Ok(self.store(key, model))
    }

    /// Chain model `μ_level` for `regime`; evaluate it at `A = a_{level+1}`.
    ///
    /// Its response is `Y` when no active level lies above `level`, otherwise
    /// the next active level's predictions at that level's arm.
    pub fn outcome(&self, regime: &Regime, level: usize) -> Result<Arc<FittedModel>> {
        regime.check_for(self.data)?;
        let suffix = regime.assignments()[level..].to_vec();
        let key = NuisanceKey::Outcome { level, suffix };
        if let Some(m) = self.cached(&key) {
            return Ok(m);
        }
        let active = active_levels(regime, self.options.chain);
        let next = active.iter().copied().find(|&l| l > level);
        let (response, upper) = match next {
            None => (self.data.y().to_vec(), None),
            Some(up) => {
                let upper = self.outcome(regime, up)?;
                let a_up = regime.a(up + 1);
                (upper.predict_rows(self.data, Some(a_up)), Some(upper))
            }
        };
        let family = self.outcome_family();
        let a_eval = regime.a(level + 1);
        let label = format!("mu{level}[{}]", &regime.to_string()[level..]);
        let model = match self.options.outcome_fit {
            OutcomeFit::Pooled => {
                self.fit_design(Role::Outcome(level), true, level, &response, None, None, family, label)?
            }
            OutcomeFit::ArmRestricted => {
                let rows: Vec<usize> = (0..self.data.n()).filter(|&i| self.data.a(i) == a_eval).collect();
                let resp: Vec<f64> = rows.iter().map(|&i| response[i]).collect();
                self.fit_design(Role::Outcome(level), false, level, &resp, Some(&rows), None, family, label)?
            }
        };
        if let Some(up) = upper {
            if !model.design().is_subset_of(up.design()) {
                self.warn(format!(
                    "outcome model {} is not nested in {}; the chain may be incompatible",
                    model.label(),
                    up.label()
                ));
            }
        }
        Ok(self.store(key, model))
    }

    /// Density model for block `k` (1-based).
    pub fn density(&self, k: usize) -> Result<Arc<DensityModel>> {
        if let Some(d) = self.densities.lock().expect("poisoned").get(&k) {
            return Ok(d.clone());
        }
        let choice = self.policy.choice(Role::Density(k)).clone();
        let learner = if choice.learner.is_adaptive() { LearnerKind::Glm } else { choice.learner };
        let seed = rng::derive_tag(self.options.seed, &format!("f{k}"));
        let model = Arc::new(
            fit_density(self.data, k, self.covariates(&choice), learner, &self.options.learner, seed)
                .map_err(|e| e.in_nuisance(format!("f{k}")))?,
        );
        let mut d = self.densities.lock().expect("poisoned");
        if let Some(existing) = d.get(&k) {
            return Ok(existing.clone());
        }
        self.fits.fetch_add(1, Ordering::SeqCst);
        d.insert(k, model.clone());
        Ok(model)
    }

    /// Regression of an arbitrary response on `(X, A, M̄_blocks)` using the
    /// learner configured for `Outcome(blocks)`. Cached under `key` if given.
    pub fn regress(
        &self,
        key: Option<NuisanceKey>,
        blocks: usize,
        response: &[f64],
        weights: Option<&[f64]>,
        family: Family,
        label: &str,
    ) -> Result<Arc<FittedModel>> {
        if let Some(k) = &key {
            if let Some(m) = self.cached(k) {
                return Ok(m);
            }
        }
        let model = self.fit_design(
            Role::Outcome(blocks),
            true,
            blocks,
            response,
            None,
            weights,
            family,
            label.to_string(),
        )?;
        match key {
            Some(k) => Ok(self.store(k, model)),
            None => {
                self.fits.fetch_add(1, Ordering::SeqCst);
                Ok(Arc::new(model))
            }
        }
    }

    /// Assembles the models a method needs for `regime`.
    pub fn nuisance_set(&self, regime: &Regime, needs: Needs) -> Result<NuisanceSet> {
        regime.check_for(self.data)?;
        let k = regime.k();
        let chain = self.options.chain;
        let mut set = NuisanceSet::empty(regime.clone(), chain);
        if needs.treatment {
            for j in needed_treatments(regime, chain) {
                set.pi[j] = Some(self.treatment(j)?);
            }
        } else if needs.propensity {
            set.pi[0] = Some(self.treatment(0)?);
        }
        if needs.chain {
            for level in active_levels(regime, chain) {
                set.mu[level] = Some(self.outcome(regime, level)?);
            }
        }
        if needs.outcome_top {
            set.mu_top = Some(self.outcome_top(regime)?);
        }
        if needs.density {
            for j in 1..=k {
                set.f[j - 1] = Some(self.density(j)?);
            }
        }
        Ok(set)
    }

    /// `E[Y | X, A, M̄_K]`, to be evaluated at `A = a_{K+1}`.
    pub fn outcome_top(&self, regime: &Regime) -> Result<Arc<FittedModel>> {
        self.outcome(regime, regime.k())
    }
}

/// Which model groups a method requires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Needs {
    /// `π_0` and every `π_j` entering the odds weights.
    pub treatment: bool,
    /// `π_0` only.
    pub propensity: bool,
    /// The (collapsed or full) outcome chain.
    pub chain: bool,
    /// The top outcome regression `μ_K`.
    pub outcome_top: bool,
    /// Every mediator density.
    pub density: bool,
}

/// Fitted nuisances for one regime. Missing entries are `None`.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    pub regime: Regime,
    pub chain: ChainMode,
    /// `π_0 … π_K`.
    pub pi: Vec<Option<Arc<FittedModel>>>,
    /// `μ_0 … μ_K` (active chain levels only).
    pub mu: Vec<Option<Arc<FittedModel>>>,
    /// `μ_K` as used by density-based estimators.
    pub mu_top: Option<Arc<FittedModel>>,
    /// `f_1 … f_K`.
    pub f: Vec<Option<Arc<DensityModel>>>,
}

impl NuisanceSet {
    pub fn empty(regime: Regime, chain: ChainMode) -> Self {
        let k = regime.k();
        NuisanceSet {
            regime,
            chain,
            pi: vec![None; k + 1],
            mu: vec![None; k + 1],
            mu_top: None,
            f: vec![None; k],
        }
    }

    pub fn pi(&self, j: usize) -> Result<&FittedModel> {
        self.pi[j]
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required nuisance pi{j} for regime {}", self.regime)))
    }

    pub fn mu(&self, level: usize) -> Result<&FittedModel> {
        self.mu[level]
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required nuisance mu{level} for regime {}", self.regime)))
    }

    pub fn mu_top(&self) -> Result<&FittedModel> {
        match (&self.mu_top, &self.mu[self.regime.k()]) {
            (Some(m), _) | (None, Some(m)) => Ok(m),
            _ => Err(Error::Config(format!(
                "missing required nuisance mu{} (top outcome model) for regime {}",
                self.regime.k(),
                self.regime
            ))),
        }
    }

    pub fn f(&self, k: usize) -> Result<&DensityModel> {
        self.f[k - 1]
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required nuisance f{k} for regime {}", self.regime)))
    }

    pub fn active_levels(&self) -> Vec<usize> {
        active_levels(&self.regime, self.chain)
    }
}

/// One-shot fit of the models a method needs, on the whole sample.
pub fn fit_nuisance_set(
    data: &ObservedData,
    regime: &Regime,
    policy: &LearnerPolicy,
    options: &FitOptions,
    needs: Needs,
) -> Result<NuisanceSet> {
    NuisanceFitter::new(data, policy.clone(), options.clone()).nuisance_set(regime, needs)
}
