//! Effect contrasts on the `θ` ladder: named path-specific effects, the full
//! ATE decomposition and the covariate-free group disparity decomposition.

use serde::{Deserialize, Serialize};

use crate::data::{standard_regimes, EffectKind, EffectSpec, GroupedData, ObservedData, Regime};
use crate::error::{Error, Result};
use crate::estimators::{estimate_regimes, mean, EstimateDiagnostics, EstimationSettings, GmfEstimate, Method};
use crate::inference::{eif_variance, wald_ci};
use crate::nuisance::design::{DesignSpec, Expansion, Response};
use crate::nuisance::{fit_learner, Family, LearnerKind, LearnerPolicy, LearnerSettings, Role};

pub const DEFAULT_LEVEL: f64 = 0.95;

/// `θ(comparison) − θ(baseline)` with per-unit contributions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub spec: EffectSpec,
    pub label: String,
    pub method: String,
    pub point: f64,
    pub theta_comparison: f64,
    pub theta_baseline: f64,
    /// EIF difference when the method has one, otherwise the summand difference.
    pub per_unit: Vec<f64>,
    pub se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub level: f64,
}

impl EffectEstimate {
    /// Builds the contrast from two estimates on the same units.
    pub fn from_estimates(spec: EffectSpec, comparison: &GmfEstimate, baseline: &GmfEstimate, level: f64) -> Result<Self> {
        if comparison.summands.len() != baseline.summands.len() {
            return Err(Error::Data("regime estimates cover different units".into()));
        }
        let with_eif = comparison.eif.is_some() && baseline.eif.is_some();
        let per_unit: Vec<f64> =
            comparison.per_unit().iter().zip(baseline.per_unit()).map(|(c, b)| c - b).collect();
        let point = comparison.theta - baseline.theta;
        let (se, ci) = if with_eif {
            let v = eif_variance(&per_unit)?;
            (Some(v.sqrt()), Some(wald_ci(point, v, level)))
        } else {
            (None, None)
        };
        Ok(EffectEstimate {
            label: spec.label(),
            spec,
            method: comparison.method.clone(),
            point,
            theta_comparison: comparison.theta,
            theta_baseline: baseline.theta,
            per_unit,
            se,
            ci,
            level,
        })
    }

    fn from_parts(spec: EffectSpec, method: &str, c: (f64, &[f64]), b: (f64, &[f64]), level: f64) -> Result<Self> {
        let per_unit: Vec<f64> = c.1.iter().zip(b.1).map(|(x, y)| x - y).collect();
        let point = c.0 - b.0;
        let v = eif_variance(&per_unit)?;
        Ok(EffectEstimate {
            label: spec.label(),
            spec,
            method: method.to_string(),
            point,
            theta_comparison: c.0,
            theta_baseline: b.0,
            per_unit,
            se: Some(v.sqrt()),
            ci: Some(wald_ci(point, v, level)),
            level,
        })
    }
}

/// Runs `method` at both regimes of `spec`, sharing nuisance fits.
pub fn estimate_effect(
    data: &ObservedData,
    spec: &EffectSpec,
    method: &Method,
    settings: &EstimationSettings,
) -> Result<EffectEstimate> {
    let regimes = [spec.comparison.clone(), spec.baseline.clone()];
    let r = estimate_regimes(data, &regimes, method, settings)?;
    EffectEstimate::from_estimates(spec.clone(), &r.estimates[0], &r.estimates[1], DEFAULT_LEVEL)
}

/// One point of the regime ladder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderPoint {
    pub regime: Regime,
    pub theta: f64,
    pub se: Option<f64>,
}

/// ATE split into successive regime differences.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    pub ate: EffectEstimate,
    pub components: Vec<EffectEstimate>,
    /// Positions flipped from 0 to 1, in order (`K+1` is the direct path).
    pub ordering: Vec<usize>,
    pub ladder: Vec<LadderPoint>,
    /// Nuisance models fitted for the whole decomposition.
    pub fits: usize,
    pub diagnostics: EstimateDiagnostics,
    pub warnings: Vec<String>,
}

impl Decomposition {
    /// `|Σ components − ATE|`.
    pub fn telescoping_error(&self) -> f64 {
        (self.components.iter().map(|c| c.point).sum::<f64>() - self.ate.point).abs()
    }
}

/// Standard name for the contrast, if it is one.
fn classify(k: usize, comparison: &Regime, baseline: &Regime) -> EffectSpec {
    let mut kinds = vec![EffectKind::Nde, EffectKind::Ate, EffectKind::TieM1, EffectKind::NieM1];
    for j in 2..=k {
        kinds.push(EffectKind::Cpse(j));
        kinds.push(EffectKind::Npse(j));
    }
    for kind in kinds {
        if let Ok(s) = standard_regimes(k, kind) {
            if &s.comparison == comparison && &s.baseline == baseline {
                return s;
            }
        }
    }
    EffectSpec { kind: EffectKind::Custom, comparison: comparison.clone(), baseline: baseline.clone() }
}

/// Validated flip order; defaults to `[K+1, K, …, 1]`.
pub fn ladder_ordering(k: usize, ordering: Option<&[usize]>) -> Result<Vec<usize>> {
    let order: Vec<usize> = match ordering {
        Some(o) => o.to_vec(),
        None => (1..=k + 1).rev().collect(),
    };
    let mut sorted = order.clone();
    sorted.sort_unstable();
    if sorted != (1..=k + 1).collect::<Vec<_>>() {
        return Err(Error::Config(format!("ordering {order:?} is not a permutation of 1..={}", k + 1)));
    }
    Ok(order)
}

/// Regimes `0̄ = r_0, r_1, …, r_{K+1} = 1̄`, flipping one position per step.
pub fn ladder_regimes(k: usize, order: &[usize]) -> Vec<Regime> {
    let mut out = vec![Regime::constant(k, 0)];
    for &p in order {
        let next = out.last().expect("non-empty").with(p, 1);
        out.push(next);
    }
    out
}

fn assemble(
    k: usize,
    regimes: &[Regime],
    thetas: &[(f64, Vec<f64>, Option<f64>)],
    method: &str,
    level: f64,
) -> Result<(EffectEstimate, Vec<EffectEstimate>, Vec<LadderPoint>)> {
    let last = regimes.len() - 1;
    let mut components = Vec::with_capacity(last);
    for i in 1..=last {
        let spec = classify(k, &regimes[i], &regimes[i - 1]);
        components.push(EffectEstimate::from_parts(
            spec,
            method,
            (thetas[i].0, &thetas[i].1),
            (thetas[i - 1].0, &thetas[i - 1].1),
            level,
        )?);
    }
    let ate_spec = standard_regimes(k, EffectKind::Ate)?;
    let ate = EffectEstimate::from_parts(ate_spec, method, (thetas[last].0, &thetas[last].1), (thetas[0].0, &thetas[0].1), level)?;
    let ladder = regimes
        .iter()
        .zip(thetas)
        .map(|(r, t)| LadderPoint { regime: r.clone(), theta: t.0, se: t.2 })
        .collect();
    Ok((ate, components, ladder))
}

/// Estimates the `K+2` ladder points once each and returns the telescoping
/// decomposition. `ordering` permutes the flip order.
pub fn decompose_ate(
    data: &ObservedData,
    method: &Method,
    ordering: Option<&[usize]>,
    settings: &EstimationSettings,
) -> Result<Decomposition> {
    let k = data.k();
    if k == 0 {
        return Err(Error::Config("decomposition needs at least one mediator block".into()));
    }
    let order = ladder_ordering(k, ordering)?;
    let regimes = ladder_regimes(k, &order);
    let r = estimate_regimes(data, &regimes, method, settings)?;
    let thetas: Vec<(f64, Vec<f64>, Option<f64>)> = r
        .estimates
        .iter()
        .map(|e| (e.theta, e.per_unit().to_vec(), e.variance().map(f64::sqrt)))
        .collect();
    let has_eif = method.has_eif();
    let (mut ate, mut components, ladder) = assemble(k, &regimes, &thetas, &method.to_string(), DEFAULT_LEVEL)?;
    if !has_eif {
        for c in components.iter_mut().chain(std::iter::once(&mut ate)) {
            c.se = None;
            c.ci = None;
        }
    }
    let mut warnings = r.warnings.clone();
    let mut diagnostics = EstimateDiagnostics::default();
    for e in &r.estimates {
        diagnostics.absorb(&e.diagnostics);
        for w in &e.diagnostics.warnings {
            if !warnings.contains(w) {
                warnings.push(w.clone());
            }
        }
    }
    Ok(Decomposition { ate, components, ordering: order, ladder, fits: r.fits, diagnostics, warnings })
}

/// Learners and clipping for [`disparity_decompose`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityOptions {
    /// `Treatment(k)` picks the learner for `P(G = 1 | M̄_k)`, `Outcome(k)`
    /// the one for `E[Y | G = 1, M̄_k]`. Covariate subsets are ignored.
    pub policy: LearnerPolicy,
    pub learner: LearnerSettings,
    pub clip: f64,
    pub level: f64,
    pub seed: u64,
}

impl Default for DisparityOptions {
    fn default() -> Self {
        DisparityOptions {
            policy: LearnerPolicy::default(),
            learner: LearnerSettings::default(),
            clip: 0.01,
            level: DEFAULT_LEVEL,
            seed: 20240521,
        }
    }
}

fn fit_on_prefix(
    data: &ObservedData,
    k: usize,
    rows: Option<&[usize]>,
    response: &[f64],
    learner: LearnerKind,
    family: Family,
    opts: &DisparityOptions,
    label: &str,
) -> Result<Vec<f64>> {
    let expansion = if learner == LearnerKind::Glm2 { Expansion::Quadratic } else { Expansion::Linear };
    let design = DesignSpec::new(data, vec![], false, k, expansion, Response::Pseudo(label.into()), family)?;
    let base = design.base_matrix(data, rows, None);
    let seed = crate::rng::derive_tag(opts.seed, label);
    let fit = fit_learner(learner, &base, response, None, family, &opts.learner, seed).map_err(|e| e.in_nuisance(label))?;
    let all = design.base_matrix(data, None, None);
    let mut scratch = Vec::new();
    Ok(all.rows().into_iter().map(|r| fit.predict(r.as_slice().expect("standard layout"), &mut scratch)).collect())
}

/// Decomposes the raw outcome gap between groups `G = 1` and `G = 0` along
/// the mediator blocks. Supported methods: eif2, ri, weighting-a.
pub fn disparity_decompose(grouped: &GroupedData, method: &Method, opts: &DisparityOptions) -> Result<Decomposition> {
    let data = grouped.data();
    let k = data.k();
    if k == 0 {
        return Err(Error::Config("disparity decomposition needs at least one mediator block".into()));
    }
    if !matches!(method, Method::Eif2 | Method::RegressionImpute | Method::WeightingA) {
        return Err(Error::Unsupported(format!(
            "disparity decomposition supports eif2, ri and weighting-a, not {method}"
        )));
    }
    let n = data.n();
    let nf = n as f64;
    let g = data.treatment();
    let y = data.y();
    let (n0, n1) = data.arm_counts();
    let p0 = n0 as f64 / nf;
    let p1 = n1 as f64 / nf;
    let ones: Vec<usize> = (0..n).filter(|&i| g[i] == 1.0).collect();
    let zeros: Vec<usize> = (0..n).filter(|&i| g[i] == 0.0).collect();
    let mean_of = |v: &[f64], rows: &[usize]| rows.iter().map(|&i| v[i]).sum::<f64>() / rows.len() as f64;
    let ybar1 = mean_of(y, &ones);
    let ybar0 = mean_of(y, &zeros);
    let family = if data.binary_outcome() { Family::Binary } else { Family::Continuous };
    let y1: Vec<f64> = ones.iter().map(|&i| y[i]).collect();
    let mut clip = crate::estimators::weights::Clipper::new(opts.clip)?;

    // θ_k for k = K..1 replaces blocks 1..k of group 1 by group 0's law.
    let mut by_k: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![]); k + 1];
    let mut fits = 0;
    let mut max_weight: f64 = 0.0;
    for kk in 1..=k {
        let label_mu = format!("mu{kk}");
        let label_pi = format!("pi{kk}");
        let needs_mu = !matches!(method, Method::WeightingA);
        let needs_pi = !matches!(method, Method::RegressionImpute);
        let mu = if needs_mu {
            let learner = opts.policy.choice(Role::Outcome(kk)).learner;
            fit_on_prefix(data, kk, Some(&ones), &y1, learner, family, opts, &label_mu)?
        } else {
            vec![0.0; n]
        };
        let odds = if needs_pi {
            let learner = opts.policy.choice(Role::Treatment(kk)).learner;
            let pi1 = fit_on_prefix(data, kk, None, g, learner, Family::Binary, opts, &label_pi)?;
            let odds: Vec<f64> = pi1.iter().map(|&p| clip.arm(p, 0.0) / clip.arm(p, 1.0)).collect();
            max_weight = odds.iter().fold(max_weight, |m, &o| m.max(o / p0));
            odds
        } else {
            vec![0.0; n]
        };
        fits += usize::from(needs_mu) + usize::from(needs_pi);
        let mu0 = mean_of(&mu, &zeros);
        let s: Vec<f64> = match method {
            Method::RegressionImpute => (0..n).map(|i| if g[i] == 0.0 { mu[i] / p0 } else { 0.0 }).collect(),
            Method::WeightingA => (0..n).map(|i| if g[i] == 1.0 { odds[i] * y[i] / p0 } else { 0.0 }).collect(),
            _ => (0..n)
                .map(|i| {
                    let mut s = 0.0;
                    if g[i] == 1.0 {
                        s += odds[i] / p0 * (y[i] - mu[i]);
                    } else {
                        s += (mu[i] - mu0) / p0;
                    }
                    s + mu0
                })
                .collect(),
        };
        let theta = mean(&s);
        let phi: Vec<f64> = match method {
            Method::RegressionImpute => {
                (0..n).map(|i| if g[i] == 0.0 { (mu[i] - theta) / p0 } else { 0.0 }).collect()
            }
            // The estimated share p0 contributes −θ·I(G=0)/p0.
            Method::WeightingA => (0..n).map(|i| if g[i] == 1.0 { s[i] } else { -theta / p0 }).collect(),
            _ => (0..n)
                .map(|i| if g[i] == 1.0 { odds[i] / p0 * (y[i] - mu[i]) } else { (mu[i] - theta) / p0 })
                .collect(),
        };
        by_k[kk] = (theta, phi);
    }

    // Ladder: 0̄, (0,…,0,1), …, (0,1,…,1), 1̄ with the first K+1 flips in default order.
    let order: Vec<usize> = (1..=k + 1).rev().collect();
    let regimes = ladder_regimes(k, &order);
    let raw = |rows_g: f64, mean_g: f64, p_g: f64| -> Vec<f64> {
        (0..n).map(|i| if g[i] == rows_g { (y[i] - mean_g) / p_g } else { 0.0 }).collect()
    };
    let mut thetas: Vec<(f64, Vec<f64>, Option<f64>)> = Vec::with_capacity(k + 2);
    thetas.push((ybar0, raw(0.0, ybar0, p0), None));
    for kk in (1..=k).rev() {
        let (t, phi) = by_k[kk].clone();
        thetas.push((t, phi, None));
    }
    thetas.push((ybar1, raw(1.0, ybar1, p1), None));
    for t in thetas.iter_mut() {
        t.2 = eif_variance(&t.1).ok().map(f64::sqrt);
    }
    let (ate, components, ladder) = assemble(k, &regimes, &thetas, &method.to_string(), opts.level)?;
    let mut warnings = Vec::new();
    if clip.checks > 0 && clip.clipped as f64 / clip.checks as f64 > 0.01 {
        warnings.push(format!(
            "{:.1}% of group probabilities were clipped at {}",
            100.0 * clip.clipped as f64 / clip.checks as f64,
            opts.clip
        ));
    }
    let diagnostics = EstimateDiagnostics {
        clipped: clip.clipped,
        clip_checks: clip.checks,
        max_weight,
        warnings: warnings.clone(),
        ..Default::default()
    };
    Ok(Decomposition { ate, components, ordering: order, ladder, fits, diagnostics, warnings })
}
