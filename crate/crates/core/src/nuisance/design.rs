//! Predictor sets for nuisance regressions.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::glm::Family;
use crate::data::{ObservedData, Unit};
use crate::error::{Error, Result};

/// Basis expansion applied by GLM learners on top of the base predictors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expansion {
    /// Intercept plus main effects.
    Linear,
    /// Adds squares and pairwise products.
    Quadratic,
}

/// What a regression is modelling. Informational; used in metadata and errors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Response {
    Treatment,
    Outcome { level: usize },
    Mediator { block: usize },
    Pseudo(String),
}

/// Base predictors are `X[covariates]`, then `A` if `treatment`, then the
/// columns of `M̄_k` for `k = mediator_blocks`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignSpec {
    pub covariates: Vec<usize>,
    pub treatment: bool,
    pub mediator_blocks: usize,
    pub mediator_columns: usize,
    pub expansion: Expansion,
    pub response: Response,
    pub family: Family,
}

impl DesignSpec {
    pub fn new(
        data: &ObservedData,
        covariates: Vec<usize>,
        treatment: bool,
        mediator_blocks: usize,
        expansion: Expansion,
        response: Response,
        family: Family,
    ) -> Result<Self> {
        if let Some(&bad) = covariates.iter().find(|&&j| j >= data.p()) {
            return Err(Error::Config(format!("covariate index {bad} out of range (p={})", data.p())));
        }
        if mediator_blocks > data.k() {
            return Err(Error::Config(format!("design uses {mediator_blocks} mediator blocks, data has {}", data.k())));
        }
        Ok(DesignSpec {
            covariates,
            treatment,
            mediator_blocks,
            mediator_columns: data.prefix_width(mediator_blocks),
            expansion,
            response,
            family,
        })
    }

    pub fn base_len(&self) -> usize {
        self.covariates.len() + usize::from(self.treatment) + self.mediator_columns
    }

    pub fn fill_base(&self, unit: Unit<'_>, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.covariates.iter().map(|&j| unit.x[j]));
        if self.treatment {
            out.push(unit.a);
        }
        out.extend_from_slice(&unit.m[..self.mediator_columns]);
    }

    /// Base predictor matrix over `rows` (all rows if `None`), with the
    /// treatment replaced by `a_override` when given.
    pub fn base_matrix(&self, data: &ObservedData, rows: Option<&[usize]>, a_override: Option<f64>) -> Array2<f64> {
        let idx: Vec<usize> = rows.map_or_else(|| (0..data.n()).collect(), <[usize]>::to_vec);
        let mut out = Array2::zeros((idx.len(), self.base_len()));
        let mut buf = Vec::with_capacity(self.base_len());
        for (r, &i) in idx.iter().enumerate() {
            let unit = data.unit_at(i, a_override.unwrap_or(data.a(i)));
            self.fill_base(unit, &mut buf);
            for (c, v) in buf.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        out
    }

    /// Nested-design check used for the outcome-chain compatibility warning.
    pub fn is_subset_of(&self, other: &DesignSpec) -> bool {
        self.covariates.iter().all(|c| other.covariates.contains(c))
            && (!self.treatment || other.treatment)
            && self.mediator_blocks <= other.mediator_blocks
            && self.expansion <= other.expansion
    }

    pub fn predictor_names(&self, data: &ObservedData) -> Vec<String> {
        let mut names: Vec<String> = self.covariates.iter().map(|&j| data.x_names()[j].clone()).collect();
        if self.treatment {
            names.push(data.treatment_name().to_string());
        }
        for b in &data.blocks()[..self.mediator_blocks] {
            names.extend(b.columns.iter().cloned());
        }
        names
    }
}

pub fn expanded_len(base_len: usize, expansion: Expansion) -> usize {
    match expansion {
        Expansion::Linear => 1 + base_len,
        Expansion::Quadratic => 1 + base_len + base_len + base_len * base_len.saturating_sub(1) / 2,
    }
}

/// Writes `[1, base, (squares, pairwise products)]` into `out`.
pub fn expand_into(base: &[f64], expansion: Expansion, out: &mut Vec<f64>) {
    out.clear();
    out.push(1.0);
    out.extend_from_slice(base);
    if expansion == Expansion::Quadratic {
        out.extend(base.iter().map(|v| v * v));
        for i in 0..base.len() {
            for j in i + 1..base.len() {
                out.push(base[i] * base[j]);
            }
        }
    }
}

pub fn expand_matrix(base: &Array2<f64>, expansion: Expansion) -> Array2<f64> {
    let (n, p) = base.dim();
    let q = expanded_len(p, expansion);
    let mut out = Array2::zeros((n, q));
    let mut buf = Vec::with_capacity(q);
    for i in 0..n {
        expand_into(base.row(i).as_slice().expect("standard layout"), expansion, &mut buf);
        for (c, v) in buf.iter().enumerate() {
            out[(i, c)] = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_expansion_layout() {
        let mut out = vec![];
        expand_into(&[2.0, 3.0, 5.0], Expansion::Quadratic, &mut out);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 5.0, 4.0, 9.0, 25.0, 6.0, 10.0, 15.0]);
        assert_eq!(out.len(), expanded_len(3, Expansion::Quadratic));
    }
}
