//! Conditional density models `f_k(m_k | x, a, m̄_{k-1})` for a mediator block.

use std::collections::HashMap;

use ndarray::Axis;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::design::{DesignSpec, Expansion, Response};
use super::glm::Family;
use super::learner::{fit_learner, LearnerFit, LearnerKind, LearnerSettings};
use crate::data::{ObservedData, Unit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
enum TableModel {
    /// Empirical frequencies per conditioning cell.
    Saturated {
        cells: HashMap<Vec<u64>, Vec<f64>>,
        marginal: Vec<f64>,
    },
    /// Continuation-ratio logits: stage `s` models `P(V = s | V ≥ s, ·)`.
    Sequential { stages: Vec<LearnerFit> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Form {
    Table { support: Vec<Vec<f64>>, model: TableModel },
    Gaussian { mean: LearnerFit, sigma: f64 },
}

/// Fitted conditional density (or mass function) of block `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityModel {
    pub block: usize,
    pub design: DesignSpec,
    form: Form,
}

fn key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() }).collect()
}

/// Fits the density of block `k` (1-based) given `(X[covariates], A, M̄_{k-1})`.
///
/// All-discrete blocks get a probability table over the observed support,
/// either saturated (`LearnerKind::Saturated`) or sequential logits. A
/// univariate continuous block gets a homoskedastic Gaussian with GLM mean.
pub fn fit_density(
    data: &ObservedData,
    k: usize,
    covariates: Vec<usize>,
    learner: LearnerKind,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<DensityModel> {
    if k == 0 || k > data.k() {
        return Err(Error::Config(format!("density block {k} out of range")));
    }
    if learner.is_adaptive() {
        return Err(Error::Unsupported(format!(
            "density models accept glm, glm2 or saturated learners, not {learner}"
        )));
    }
    let layout = data.block(k).clone();
    let expansion = if learner == LearnerKind::Glm2 { Expansion::Quadratic } else { Expansion::Linear };
    let family = if layout.all_discrete() { Family::Binary } else { Family::Continuous };
    let design = DesignSpec::new(data, covariates, true, k - 1, expansion, Response::Mediator { block: k }, family)?;
    let base = design.base_matrix(data, None, None);
    let values: Vec<Vec<f64>> = (0..data.n()).map(|i| data.m_row(i)[layout.range()].to_vec()).collect();

    if layout.all_discrete() {
        let mut support: Vec<Vec<f64>> = values.clone();
        support.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
        support.dedup();
        let index: HashMap<Vec<u64>, usize> = support.iter().enumerate().map(|(s, v)| (key(v), s)).collect();
        let codes: Vec<usize> = values.iter().map(|v| index[&key(v)]).collect();
        let s_len = support.len();
        let model = if learner == LearnerKind::Saturated {
            let mut counts: HashMap<Vec<u64>, Vec<f64>> = HashMap::new();
            let mut marginal = vec![0.0; s_len];
            for (i, row) in base.axis_iter(Axis(0)).enumerate() {
                let c = counts.entry(key(row.as_slice().expect("standard layout"))).or_insert_with(|| vec![0.0; s_len]);
                c[codes[i]] += 1.0;
                marginal[codes[i]] += 1.0;
            }
            for c in counts.values_mut() {
                let tot: f64 = c.iter().sum();
                c.iter_mut().for_each(|v| *v /= tot);
            }
            let tot: f64 = marginal.iter().sum();
            marginal.iter_mut().for_each(|v| *v /= tot);
            TableModel::Saturated { cells: counts, marginal }
        } else {
            let mut stages = Vec::with_capacity(s_len.saturating_sub(1));
            for s in 0..s_len.saturating_sub(1) {
                let rows: Vec<usize> = (0..data.n()).filter(|&i| codes[i] >= s).collect();
                let xb = base.select(Axis(0), &rows);
                let yb: Vec<f64> = rows.iter().map(|&i| f64::from(codes[i] == s)).collect();
                let fit = fit_learner(learner, &xb, &yb, None, Family::Binary, settings, seed)
                    .map_err(|e| e.in_nuisance(format!("f_{k} stage {s}")))?;
                stages.push(fit);
            }
            TableModel::Sequential { stages }
        };
        return Ok(DensityModel { block: k, design, form: Form::Table { support, model } });
    }
    if layout.any_discrete() {
        return Err(Error::Unsupported(format!(
            "block '{}' mixes discrete and continuous columns; use eif2 or weighting-a, which need no density model",
            layout.name
        )));
    }
    if layout.width > 1 {
        return Err(Error::Unsupported(format!(
            "block '{}' is multivariate continuous; no density model is available, use eif2 or weighting-a",
            layout.name
        )));
    }
    let y: Vec<f64> = values.iter().map(|v| v[0]).collect();
    let kind = if learner == LearnerKind::Saturated { LearnerKind::Saturated } else { learner };
    let mean = fit_learner(kind, &base, &y, None, Family::Continuous, settings, seed)
        .map_err(|e| e.in_nuisance(format!("f_{k} mean")))?;
    let mut scratch = Vec::new();
    let rss: f64 = base
        .axis_iter(Axis(0))
        .zip(&y)
        .map(|(row, yi)| {
            let r = yi - mean.predict(row.as_slice().expect("standard layout"), &mut scratch);
            r * r
        })
        .sum();
    let q = match &mean {
        LearnerFit::Glm { fit, .. } => fit.coef.len(),
        _ => 1,
    };
    let dof = if data.n() > q { (data.n() - q) as f64 } else { data.n() as f64 };
    let sigma = (rss / dof).sqrt();
    if !(sigma > 0.0) {
        return Err(Error::Numeric(format!("block {k} has zero residual variance")));
    }
    Ok(DensityModel { block: k, design, form: Form::Gaussian { mean, sigma } })
}

const NORM_CONST: f64 = 0.398_942_280_401_432_7; // 1/sqrt(2π)

impl DensityModel {
    pub fn is_discrete(&self) -> bool {
        matches!(self.form, Form::Table { .. })
    }

    pub fn support(&self) -> Option<&[Vec<f64>]> {
        match &self.form {
            Form::Table { support, .. } => Some(support),
            Form::Gaussian { .. } => None,
        }
    }

    /// Probabilities over [`Self::support`] given the conditioning variables.
    pub fn pmf(&self, cond: Unit<'_>, scratch: &mut Vec<f64>) -> Option<Vec<f64>> {
        let Form::Table { support, model } = &self.form else { return None };
        let mut base = Vec::with_capacity(self.design.base_len());
        self.design.fill_base(cond, &mut base);
        Some(match model {
            TableModel::Saturated { cells, marginal } => cells.get(&key(&base)).unwrap_or(marginal).clone(),
            TableModel::Sequential { stages } => {
                let mut probs = Vec::with_capacity(support.len());
                let mut remaining = 1.0;
                for st in stages {
                    let h = st.predict(&base, scratch);
                    probs.push(remaining * h);
                    remaining *= 1.0 - h;
                }
                probs.push(remaining);
                probs
            }
        })
    }

    /// Conditional mean and standard deviation of a Gaussian block.
    pub fn gaussian(&self, cond: Unit<'_>, scratch: &mut Vec<f64>) -> Option<(f64, f64)> {
        let Form::Gaussian { mean, sigma } = &self.form else { return None };
        let mut base = Vec::with_capacity(self.design.base_len());
        self.design.fill_base(cond, &mut base);
        Some((mean.predict(&base, scratch), *sigma))
    }

    /// Density (or mass) of `value` for block `k` given `cond`.
    pub fn density(&self, cond: Unit<'_>, value: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match &self.form {
            Form::Table { support, .. } => {
                let probs = self.pmf(cond, scratch).expect("table form");
                let k = key(value);
                support.iter().position(|s| key(s) == k).map_or(0.0, |s| probs[s])
            }
            Form::Gaussian { .. } => {
                let (mu, sd) = self.gaussian(cond, scratch).expect("gaussian form");
                let z = (value[0] - mu) / sd;
                NORM_CONST / sd * (-0.5 * z * z).exp()
            }
        }
    }

    /// Coefficients of a Gaussian-linear mean `(1, base…)`, if applicable.
    pub fn mean_coefficients(&self) -> Option<&[f64]> {
        match &self.form {
            Form::Gaussian { mean: LearnerFit::Glm { fit, .. }, .. } => Some(&fit.coef),
            _ => None,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match &self.form {
            Form::Gaussian { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    /// Antithetic standard-normal pairs, `draws` values in total.
    pub fn normal_draws<R: Rng>(rng: &mut R, draws: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(draws);
        while out.len() < draws {
            let z: f64 = rng.sample(StandardNormal);
            out.push(z);
            if out.len() < draws {
                out.push(-z);
            }
        }
        out
    }
}

/// Checks that a discrete table sums to one at the given conditioning rows.
pub fn table_mass_error(model: &DensityModel, data: &ObservedData, rows: &[usize]) -> f64 {
    let mut scratch = Vec::new();
    rows.iter()
        .filter_map(|&i| model.pmf(data.unit(i), &mut scratch))
        .map(|p| (p.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}
