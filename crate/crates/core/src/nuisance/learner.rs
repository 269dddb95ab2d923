//! Learners that map a base predictor matrix to a fitted regression.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::boost::{fit_boost, BoostFit, BoostParams};
use super::design::{expand_into, expand_matrix, Expansion};
use super::folds::make_folds;
use super::glm::{fit_glm, Family, GlmFit, GlmProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    /// Main-effects GLM.
    Glm,
    /// GLM with squares and pairwise interactions.
    Glm2,
    /// Boosted stumps.
    Boost,
    /// Cross-validated convex combination of the stack candidates.
    Stack,
    /// Cell means over distinct predictor vectors.
    Saturated,
}

impl LearnerKind {
    pub fn is_glm_family(self) -> bool {
        matches!(self, LearnerKind::Glm | LearnerKind::Glm2 | LearnerKind::Saturated)
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, LearnerKind::Boost | LearnerKind::Stack)
    }

    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Glm => "glm",
            LearnerKind::Glm2 => "glm2",
            LearnerKind::Boost => "boost",
            LearnerKind::Stack => "stack",
            LearnerKind::Saturated => "saturated",
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "glm" => Ok(LearnerKind::Glm),
            "glm2" => Ok(LearnerKind::Glm2),
            "boost" => Ok(LearnerKind::Boost),
            "stack" => Ok(LearnerKind::Stack),
            "saturated" => Ok(LearnerKind::Saturated),
            other => Err(Error::Config(format!("unknown learner '{other}' (expected glm, glm2, boost, stack, saturated)"))),
        }
    }
}

/// Knobs shared by every learner fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSettings {
    pub ridge: f64,
    pub boost: BoostParams,
    pub stack_candidates: Vec<LearnerKind>,
    pub stack_folds: usize,
    pub stack_grid: f64,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        LearnerSettings {
            ridge: 1e-6,
            boost: BoostParams::default(),
            stack_candidates: vec![LearnerKind::Glm, LearnerKind::Glm2, LearnerKind::Boost],
            stack_folds: 5,
            stack_grid: 0.05,
        }
    }
}

/// Saturated cell means keyed by the exact predictor vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellTable {
    cells: HashMap<Vec<u64>, f64>,
    fallback: f64,
    family: Family,
}

fn cell_key(row: &[f64]) -> Vec<u64> {
    // Normalise -0.0 so it shares a cell with 0.0.
    row.iter().map(|v| if *v == 0.0 { 0u64 } else { v.to_bits() }).collect()
}

const SATURATED_FLOOR: f64 = 1e-12;

impl CellTable {
    pub fn fit(base: &Array2<f64>, y: &[f64], w: Option<&[f64]>, family: Family) -> Result<Self> {
        let mut acc: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
        let (mut tot, mut totw) = (0.0, 0.0);
        for (i, row) in base.axis_iter(Axis(0)).enumerate() {
            let wi = w.map_or(1.0, |w| w[i]);
            let e = acc.entry(cell_key(row.as_slice().expect("standard layout"))).or_insert((0.0, 0.0));
            e.0 += wi * y[i];
            e.1 += wi;
            tot += wi * y[i];
            totw += wi;
        }
        if totw <= 0.0 {
            return Err(Error::Numeric("saturated fit has zero total weight".into()));
        }
        let fallback = tot / totw;
        let cells = acc
            .into_iter()
            .map(|(k, (s, sw))| (k, if sw > 0.0 { s / sw } else { fallback }))
            .collect();
        Ok(CellTable { cells, fallback, family })
    }

    pub fn cells(&self) -> usize {
        self.cells.len()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let v = self.cells.get(&cell_key(row)).copied().unwrap_or(self.fallback);
        match self.family {
            Family::Binary => v.clamp(SATURATED_FLOOR, 1.0 - SATURATED_FLOOR),
            Family::Continuous => v,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LearnerFit {
    Glm { fit: GlmFit, expansion: Expansion },
    Boost(BoostFit),
    Stack(Vec<(f64, LearnerKind, LearnerFit)>),
    Saturated(CellTable),
}

impl LearnerFit {
    pub fn predict(&self, base: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match self {
            LearnerFit::Glm { fit, expansion } => {
                expand_into(base, *expansion, scratch);
                fit.predict(scratch)
            }
            LearnerFit::Boost(b) => b.predict(base),
            LearnerFit::Saturated(t) => t.predict(base),
            LearnerFit::Stack(members) => members
                .iter()
                .map(|(w, _, m)| w * m.predict(base, scratch))
                .sum(),
        }
    }

    /// Stack weights by candidate, or `None` for a single learner.
    pub fn stack_weights(&self) -> Option<Vec<(LearnerKind, f64)>> {
        match self {
            LearnerFit::Stack(m) => Some(m.iter().map(|(w, k, _)| (*k, *w)).collect()),
            _ => None,
        }
    }
}

/// Fits `kind` on a base predictor matrix. `w` are fitting weights
/// (GLM and saturated learners only).
pub fn fit_learner(
    kind: LearnerKind,
    base: &Array2<f64>,
    y: &[f64],
    w: Option<&[f64]>,
    family: Family,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<LearnerFit> {
    if base.nrows() != y.len() {
        return Err(Error::Data("predictor/response length mismatch".into()));
    }
    if y.is_empty() {
        return Err(Error::Data("cannot fit a learner on zero rows".into()));
    }
    if w.is_some() && kind.is_adaptive() {
        return Err(Error::Unsupported(format!("learner '{kind}' does not accept fitting weights")));
    }
    match kind {
        LearnerKind::Glm | LearnerKind::Glm2 => {
            let expansion = if kind == LearnerKind::Glm { Expansion::Linear } else { Expansion::Quadratic };
            let rows = expand_matrix(base, expansion);
            let fit = fit_glm(&GlmProblem {
                rows: &rows,
                response: y,
                weights: w,
                ridge: settings.ridge,
                free_intercept: true,
                family,
            })?;
            Ok(LearnerFit::Glm { fit, expansion })
        }
        LearnerKind::Boost => Ok(LearnerFit::Boost(fit_boost(base, y, family, &settings.boost, seed)?)),
        LearnerKind::Saturated => Ok(LearnerFit::Saturated(CellTable::fit(base, y, w, family)?)),
        LearnerKind::Stack => fit_stack(&settings.stack_candidates, base, y, family, settings, seed),
    }
}

fn candidate_loss(pred: f64, y: f64, family: Family) -> f64 {
    match family {
        Family::Continuous => (y - pred) * (y - pred),
        Family::Binary => {
            let p = pred.clamp(1e-12, 1.0 - 1e-12);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

/// Simplex grid with the given resolution over `c` candidates.
fn simplex_grid(c: usize, step: f64) -> Vec<Vec<f64>> {
    let units = (1.0 / step).round() as usize;
    let mut out = Vec::new();
    let mut cur = vec![0usize; c];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for u in 0..=left {
            cur[pos] = u;
            rec(pos + 1, left - u, cur, out);
        }
    }
    let mut raw = Vec::new();
    rec(0, units, &mut cur, &mut raw);
    for r in raw {
        out.push(r.iter().map(|&u| u as f64 / units as f64).collect());
    }
    out
}

/// Cross-validated out-of-fold predictions and the chosen convex weights.
#[derive(Debug, Clone)]
pub struct StackSelection {
    pub weights: Vec<f64>,
    pub candidate_loss: Vec<f64>,
    pub ensemble_loss: f64,
}

pub fn select_stack_weights(
    candidates: &[LearnerKind],
    base: &Array2<f64>,
    y: &[f64],
    family: Family,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<StackSelection> {
    let n = y.len();
    let c = candidates.len();
    let folds = make_folds(n, settings.stack_folds.min(n).max(2), seed ^ 0x57AC)?;
    let mut oof = Array2::<f64>::zeros((n, c));
    let mut ok = vec![true; c];
    let mut scratch = Vec::new();
    for f in 0..folds.j {
        let train = folds.complement(f);
        let test = folds.fold(f);
        let xb = base.select(Axis(0), &train);
        let yb: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        for (ci, &kind) in candidates.iter().enumerate() {
            if !ok[ci] {
                continue;
            }
            match fit_learner(kind, &xb, &yb, None, family, settings, seed.wrapping_add(f as u64)) {
                Ok(model) => {
                    for &i in &test {
                        oof[(i, ci)] = model.predict(base.row(i).as_slice().expect("standard layout"), &mut scratch);
                    }
                }
                Err(e) => {
                    log::warn!("stack candidate {kind} dropped: {e}");
                    ok[ci] = false;
                }
            }
        }
    }
    if !ok.iter().any(|&v| v) {
        return Err(Error::Numeric("every stack candidate failed".into()));
    }
    let loss_of = |wts: &[f64]| -> f64 {
        (0..n)
            .map(|i| {
                let pred: f64 = (0..c).map(|j| wts[j] * oof[(i, j)]).sum();
                candidate_loss(pred, y[i], family)
            })
            .sum::<f64>()
            / n as f64
    };
    let candidate_loss: Vec<f64> = (0..c)
        .map(|j| {
            if ok[j] {
                let mut e = vec![0.0; c];
                e[j] = 1.0;
                loss_of(&e)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for wts in simplex_grid(c, settings.stack_grid) {
        if wts.iter().zip(&ok).any(|(w, ok)| *w > 0.0 && !ok) {
            continue;
        }
        let l = loss_of(&wts);
        if best.as_ref().map_or(true, |(b, _)| l < *b) {
            best = Some((l, wts));
        }
    }
    let (ensemble_loss, weights) = best.expect("grid contains a vertex of a working candidate");
    Ok(StackSelection { weights, candidate_loss, ensemble_loss })
}

fn fit_stack(
    candidates: &[LearnerKind],
    base: &Array2<f64>,
    y: &[f64],
    family: Family,
    settings: &LearnerSettings,
    seed: u64,
) -> Result<LearnerFit> {
    if candidates.is_empty() {
        return Err(Error::Config("stack needs at least one candidate".into()));
    }
    if candidates.contains(&LearnerKind::Stack) {
        return Err(Error::Config("a stack cannot contain another stack".into()));
    }
    let weights = if candidates.len() == 1 {
        vec![1.0]
    } else {
        select_stack_weights(candidates, base, y, family, settings, seed)?.weights
    };
    let mut members = Vec::new();
    for (kind, w) in candidates.iter().zip(&weights) {
        if *w > 0.0 {
            members.push((*w, *kind, fit_learner(*kind, base, y, None, family, settings, seed)?));
        }
    }
    Ok(LearnerFit::Stack(members))
}
