//! Ridge-penalized least squares and logistic regression (IRLS).

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::ObservedData;
use crate::error::{Error, Result};

/// Response family of a regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Bernoulli with logit link; fractional responses in [0, 1] are allowed.
    Binary,
    /// Gaussian with identity link.
    Continuous,
}

pub const MAX_IRLS_ITERATIONS: usize = 100;
pub const IRLS_TOLERANCE: f64 = 1e-8;

/// Coefficients of a fitted GLM plus solver trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlmFit {
    pub coef: Vec<f64>,
    pub family: Family,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective after each accepted step (log-likelihood scale for
    /// the binary family, negative half squared error for the continuous one).
    pub objective: Vec<f64>,
}

impl GlmFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        self.coef.iter().zip(row).map(|(c, v)| c * v).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let eta = self.linear_predictor(row);
        match self.family {
            Family::Binary => expit(eta),
            Family::Continuous => eta,
        }
    }
}

/// Least squares with penalty `ridge·‖β‖²` on every coefficient.
pub fn fit_linear(rows: &Array2<f64>, response: &[f64], ridge: f64) -> Result<GlmFit> {
    fit_glm(&GlmProblem {
        rows,
        response,
        weights: None,
        ridge,
        free_intercept: false,
        family: Family::Continuous,
    })
}

/// Penalized logistic regression by IRLS, penalty on every coefficient.
pub fn fit_logistic(rows: &Array2<f64>, response: &[f64], ridge: f64) -> Result<GlmFit> {
    fit_glm(&GlmProblem {
        rows,
        response,
        weights: None,
        ridge,
        free_intercept: false,
        family: Family::Binary,
    })
}

pub(crate) struct GlmProblem<'a> {
    pub rows: &'a Array2<f64>,
    pub response: &'a [f64],
    pub weights: Option<&'a [f64]>,
    pub ridge: f64,
    /// Leave column 0 unpenalized (it is the intercept).
    pub free_intercept: bool,
    pub family: Family,
}

pub(crate) fn fit_glm(prob: &GlmProblem<'_>) -> Result<GlmFit> {
    let (n, p) = prob.rows.dim();
    if prob.response.len() != n {
        return Err(Error::Data(format!("response length {} does not match {n} design rows", prob.response.len())));
    }
    if let Some(w) = prob.weights {
        if w.len() != n || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Data("fitting weights must be finite, nonnegative and one per row".into()));
        }
    }
    if !(prob.ridge >= 0.0) {
        return Err(Error::Config("ridge must be nonnegative".into()));
    }
    if prob.rows.iter().any(|v| !v.is_finite()) || prob.response.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in regression inputs".into()));
    }
    if prob.family == Family::Binary && prob.response.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Data("binary-family response must lie in [0, 1]".into()));
    }
    if p == 0 {
        return Ok(GlmFit { coef: vec![], family: prob.family, iterations: 0, converged: true, objective: vec![] });
    }
    match prob.family {
        Family::Continuous => solve_gaussian(prob),
        Family::Binary => solve_logistic(prob),
    }
}

fn penalty_diag(prob: &GlmProblem<'_>, p: usize) -> Vec<f64> {
    (0..p)
        .map(|j| if prob.free_intercept && j == 0 { 0.0 } else { prob.ridge })
        .collect()
}

/// Accumulates `XᵀWX` (lower triangle mirrored) and `XᵀWz`.
fn normal_equations(rows: &Array2<f64>, w: impl Fn(usize) -> f64, z: impl Fn(usize) -> f64) -> (DMatrix<f64>, DVector<f64>) {
    let (n, p) = rows.dim();
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xtz = DVector::<f64>::zeros(p);
    for i in 0..n {
        let wi = w(i);
        if wi == 0.0 {
            continue;
        }
        let row = rows.row(i);
        let zi = z(i);
        for a in 0..p {
            let va = row[a] * wi;
            if va == 0.0 {
                continue;
            }
            xtz[a] += va * zi;
            for b in 0..=a {
                xtx[(a, b)] += va * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    (xtx, xtz)
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>, penalty: &[f64], strict: bool) -> Result<DVector<f64>> {
    let scale = (0..h.nrows()).map(|j| h[(j, j)].abs()).fold(0.0, f64::max).max(1e-300);
    for (j, pen) in penalty.iter().enumerate() {
        h[(j, j)] += pen;
    }
    let chol = h.clone().cholesky();
    let rank_msg = "design matrix is rank deficient; refit with a positive ridge penalty";
    match chol {
        Some(c) => {
            if strict {
                let l = c.l_dirty();
                let min_pivot = (0..l.nrows()).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
                if min_pivot < 1e-11 * scale {
                    return Err(Error::Numeric(rank_msg.into()));
                }
            }
            Ok(c.solve(rhs))
        }
        None => Err(Error::Numeric(rank_msg.into())),
    }
}

fn solve_gaussian(prob: &GlmProblem<'_>) -> Result<GlmFit> {
    let p = prob.rows.ncols();
    let weight = |i: usize| prob.weights.map_or(1.0, |w| w[i]);
    let (xtx, xty) = normal_equations(prob.rows, weight, |i| prob.response[i]);
    let penalty = penalty_diag(prob, p);
    let strict = penalty.iter().all(|&v| v == 0.0);
    let beta = solve_spd(xtx, &xty, &penalty, strict)?;
    let coef: Vec<f64> = beta.iter().copied().collect();
    let mut sse = 0.0;
    for (i, row) in prob.rows.rows().into_iter().enumerate() {
        let r = prob.response[i] - row.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
        sse += weight(i) * r * r;
    }
    let pen: f64 = coef.iter().zip(&penalty).map(|(c, l)| l * c * c).sum();
    Ok(GlmFit {
        coef,
        family: Family::Continuous,
        iterations: 1,
        converged: true,
        objective: vec![-0.5 * (sse + pen)],
    })
}

fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic_objective(prob: &GlmProblem<'_>, beta: &[f64], penalty: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, row) in prob.rows.rows().into_iter().enumerate() {
        let w = prob.weights.map_or(1.0, |w| w[i]);
        if w == 0.0 {
            continue;
        }
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        ll += w * (prob.response[i] * eta - softplus(eta));
    }
    ll - 0.5 * beta.iter().zip(penalty).map(|(b, l)| l * b * b).sum::<f64>()
}

fn solve_logistic(prob: &GlmProblem<'_>) -> Result<GlmFit> {
    let p = prob.rows.ncols();
    let penalty = penalty_diag(prob, p);
    let strict = penalty.iter().all(|&v| v == 0.0);
    let mut beta = vec![0.0; p];
    let mut obj = logistic_objective(prob, &beta, &penalty);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;
    let mut polished = false;

    while iterations < MAX_IRLS_ITERATIONS {
        iterations += 1;
        let eta: Vec<f64> = prob
            .rows
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum())
            .collect();
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let weight = |i: usize| {
            let w = prob.weights.map_or(1.0, |w| w[i]);
            w * (mu[i] * (1.0 - mu[i])).max(1e-300)
        };
        // Newton step: H δ = gradient.
        let (h, _) = normal_equations(prob.rows, weight, |_| 0.0);
        let mut grad = DVector::<f64>::zeros(p);
        for (i, row) in prob.rows.rows().into_iter().enumerate() {
            let w = prob.weights.map_or(1.0, |w| w[i]);
            let r = w * (prob.response[i] - mu[i]);
            if r != 0.0 {
                for j in 0..p {
                    grad[j] += row[j] * r;
                }
            }
        }
        for j in 0..p {
            grad[j] -= penalty[j] * beta[j];
        }
        let delta = solve_spd(h, &grad, &penalty, false)?;

        // Step halving keeps the objective non-decreasing.
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + t * d).collect();
            let cand_obj = logistic_objective(prob, &cand, &penalty);
            if cand_obj.is_finite() && cand_obj >= obj - 1e-12 * obj.abs().max(1.0) {
                accepted = Some((cand, cand_obj));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, cand_obj)) = accepted else {
            // No ascent direction left: at the optimum to working precision.
            converged = true;
            break;
        };
        let step = delta.iter().map(|d| (t * d).abs()).fold(0.0, f64::max);
        debug_assert!(cand_obj >= obj - 1e-12 * obj.abs().max(1.0));
        beta = cand;
        obj = cand_obj;
        trace.push(obj);
        if step < IRLS_TOLERANCE {
            if polished {
                converged = true;
                break;
            }
            // One extra Newton step drives the score to rounding level.
            polished = true;
            converged = true;
        } else if polished {
            polished = false;
            converged = false;
        }
    }
    if !converged {
        if strict {
            return Err(Error::Numeric(format!(
                "logistic regression did not converge after {MAX_IRLS_ITERATIONS} iterations (likely separation); use a positive ridge"
            )));
        }
        log::warn!("logistic regression hit the iteration cap; returning the last iterate");
    }
    Ok(GlmFit { coef: beta, family: Family::Binary, iterations, converged, objective: trace })
}

/// Main-effects logistic propensity on all covariates, used by diagnostics.
pub(crate) fn coarse_propensity(data: &ObservedData) -> Result<Vec<f64>> {
    let n = data.n();
    let p = data.p();
    let mut rows = Array2::zeros((n, p + 1));
    for i in 0..n {
        rows[(i, 0)] = 1.0;
        for (j, v) in data.x_row(i).iter().enumerate() {
            rows[(i, j + 1)] = *v;
        }
    }
    let fit = fit_glm(&GlmProblem {
        rows: &rows,
        response: data.treatment(),
        weights: None,
        ridge: 1e-6,
        free_intercept: true,
        family: Family::Binary,
    })?;
    Ok((0..n).map(|i| fit.predict(rows.row(i).as_slice().expect("contiguous"))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn with_intercept(x: &[f64]) -> Array2<f64> {
        let mut m = Array2::zeros((x.len(), 2));
        for (i, v) in x.iter().enumerate() {
            m[(i, 0)] = 1.0;
            m[(i, 1)] = *v;
        }
        m
    }

    #[test]
    fn exact_line_is_recovered() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let rows = with_intercept(&x);
        let fit = fit_linear(&rows, &y, 0.0).unwrap();
        assert!((fit.coef[1] - 2.0).abs() < 1e-10);
        assert!(fit.coef[0].abs() < 1e-10);
        for (i, yi) in y.iter().enumerate() {
            assert!((fit.predict(rows.row(i).as_slice().unwrap()) - yi).abs() < 1e-10);
        }
    }

    #[test]
    fn intercept_only_predicts_mean() {
        let y = [1.0, 4.0, 2.0, 9.0];
        let rows = Array2::ones((4, 1));
        let fit = fit_linear(&rows, &y, 0.0).unwrap();
        assert!((fit.predict(&[1.0]) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_without_ridge_is_an_error() {
        let mut rows = Array2::zeros((5, 2));
        for i in 0..5 {
            rows[(i, 0)] = i as f64;
            rows[(i, 1)] = 2.0 * i as f64;
        }
        let err = fit_linear(&rows, &[1.0, 2.0, 3.0, 4.0, 5.0], 0.0).unwrap_err();
        assert!(err.to_string().contains("ridge"));
        assert!(fit_linear(&rows, &[1.0, 2.0, 3.0, 4.0, 5.0], 1e-3).is_ok());
    }

    #[test]
    fn logistic_intercept_only_half_ones() {
        let rows = Array2::ones((6, 1));
        let fit = fit_logistic(&rows, &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0], 0.0).unwrap();
        assert!(fit.coef[0].abs() < 1e-10);
        assert!((fit.predict(&[1.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn logistic_all_zero_with_default_ridge() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let rows = with_intercept(&x);
        let fit = fit_logistic(&rows, &[0.0; 10], 1e-6).unwrap();
        for i in 0..10 {
            assert!(fit.predict(rows.row(i).as_slice().unwrap()) < 0.01);
        }
    }

    #[test]
    fn separation_without_ridge_is_an_error() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let err = fit_logistic(&with_intercept(&x), &[0.0, 0.0, 1.0, 1.0], 0.0).unwrap_err();
        assert!(err.to_string().contains("ridge"));
    }

    #[test]
    fn objective_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| f64::from(rng.gen::<f64>() < expit(0.3 + 1.7 * v)))
            .collect();
        let fit = fit_logistic(&with_intercept(&x), &y, 1e-6).unwrap();
        assert!(fit.converged);
        for w in fit.objective.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn weighted_fit_matches_replicated_rows() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 0.0, 1.0, 1.0];
        let w = [1.0, 2.0, 1.0, 3.0];
        let rows = with_intercept(&x);
        let weighted = fit_glm(&GlmProblem {
            rows: &rows,
            response: &y,
            weights: Some(&w),
            ridge: 0.0,
            free_intercept: false,
            family: Family::Binary,
        })
        .unwrap();
        let (mut xs, mut ys) = (vec![], vec![]);
        for i in 0..4 {
            for _ in 0..w[i] as usize {
                xs.push(x[i]);
                ys.push(y[i]);
            }
        }
        let replicated = fit_logistic(&with_intercept(&xs), &ys, 0.0).unwrap();
        for j in 0..2 {
            assert!((weighted.coef[j] - replicated.coef[j]).abs() < 1e-8);
        }
    }
}
