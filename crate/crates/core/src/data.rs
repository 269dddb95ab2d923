//! Observed-data layout, treatment regimes and effect specifications.
//!
//! Mediator blocks are stored side by side in one `n × q` matrix; block `k`
//! (1-based, matching the usual `M_1 … M_K` notation) occupies a contiguous
//! column range. Level `k` of the outcome chain conditions on the first `k`
//! blocks, so most code only needs [`ObservedData::prefix_width`].

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One mediator block as supplied by the caller.
#[derive(Debug, Clone)]
pub struct MediatorBlock {
    pub name: String,
    pub columns: Vec<String>,
    pub discrete: Vec<bool>,
    pub values: Array2<f64>,
}

impl MediatorBlock {
    pub fn new(name: impl Into<String>, columns: Vec<String>, discrete: Vec<bool>, values: Array2<f64>) -> Self {
        MediatorBlock { name: name.into(), columns, discrete, values }
    }

    /// Univariate continuous block.
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        let name = name.into();
        let n = values.len();
        MediatorBlock {
            columns: vec![name.clone()],
            name,
            discrete: vec![false],
            values: Array2::from_shape_vec((n, 1), values).expect("column vector"),
        }
    }

    /// Univariate discrete (integer-coded) block.
    pub fn discrete(name: impl Into<String>, values: Vec<f64>) -> Self {
        let mut b = Self::continuous(name, values);
        b.discrete = vec![true];
        b
    }
}

/// Position and metadata of a block inside the stacked mediator matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockLayout {
    pub name: String,
    pub columns: Vec<String>,
    pub discrete: Vec<bool>,
    pub offset: usize,
    pub width: usize,
}

impl BlockLayout {
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.width
    }

    pub fn all_discrete(&self) -> bool {
        self.discrete.iter().all(|&d| d)
    }

    pub fn any_discrete(&self) -> bool {
        self.discrete.iter().any(|&d| d)
    }
}

/// A borrowed view of one unit, with the treatment possibly overridden.
#[derive(Debug, Clone, Copy)]
pub struct Unit<'a> {
    pub x: &'a [f64],
    pub a: f64,
    pub m: &'a [f64],
}

/// Rectangular dataset `(X, A, M_1..M_K, Y)`. Immutable once built.
#[derive(Debug, Clone)]
pub struct ObservedData {
    x: Array2<f64>,
    a: Vec<f64>,
    m: Array2<f64>,
    y: Vec<f64>,
    blocks: Vec<BlockLayout>,
    x_names: Vec<String>,
    treatment_name: String,
    outcome_name: String,
}

impl ObservedData {
    /// Builds and validates a dataset. Covariate names default to `x1..xp`.
    pub fn new(x: Array2<f64>, a: Vec<f64>, blocks: Vec<MediatorBlock>, y: Vec<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, names, a, blocks, y, "a", "y")
    }

    pub fn with_names(
        x: Array2<f64>,
        x_names: Vec<String>,
        a: Vec<f64>,
        blocks: Vec<MediatorBlock>,
        y: Vec<f64>,
        treatment_name: &str,
        outcome_name: &str,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if x.nrows() != n {
            return Err(Error::Data(format!("covariate block has {} rows, expected {n}", x.nrows())));
        }
        if x_names.len() != x.ncols() {
            return Err(Error::Data("covariate name count does not match columns".into()));
        }
        if y.len() != n {
            return Err(Error::Data(format!("outcome has {} rows, expected {n}", y.len())));
        }
        for (j, name) in x_names.iter().enumerate() {
            if x.column(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("non-finite value in column '{name}'")));
            }
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in column '{treatment_name}'")));
        }
        if let Some(v) = a.iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data(format!("treatment column '{treatment_name}' must be 0/1, found {v}")));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in column '{outcome_name}'")));
        }
        let treated = a.iter().filter(|&&v| v == 1.0).count();
        if treated == 0 {
            return Err(Error::Data("empty treated arm".into()));
        }
        if treated == n {
            return Err(Error::Data("empty control arm".into()));
        }

        let width: usize = blocks.iter().map(|b| b.values.ncols()).sum();
        let mut m = Array2::zeros((n, width));
        let mut layouts = Vec::with_capacity(blocks.len());
        let mut offset = 0;
        for b in blocks {
            let w = b.values.ncols();
            if b.values.nrows() != n {
                return Err(Error::Data(format!(
                    "mediator block '{}' has {} rows, expected {n}",
                    b.name,
                    b.values.nrows()
                )));
            }
            if w == 0 {
                return Err(Error::Data(format!("mediator block '{}' has no columns", b.name)));
            }
            if b.columns.len() != w || b.discrete.len() != w {
                return Err(Error::Data(format!("mediator block '{}' metadata does not match its columns", b.name)));
            }
            for j in 0..w {
                if b.values.column(j).iter().any(|v| !v.is_finite()) {
                    return Err(Error::Data(format!("non-finite value in column '{}'", b.columns[j])));
                }
            }
            m.slice_mut(ndarray::s![.., offset..offset + w]).assign(&b.values);
            layouts.push(BlockLayout {
                name: b.name,
                columns: b.columns,
                discrete: b.discrete,
                offset,
                width: w,
            });
            offset += w;
        }

        Ok(ObservedData {
            x: x.as_standard_layout().to_owned(),
            a,
            m,
            y,
            blocks: layouts,
            x_names,
            treatment_name: treatment_name.to_string(),
            outcome_name: outcome_name.to_string(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Number of mediator blocks.
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn mediators(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        self.x.row(i).to_slice().expect("standard layout")
    }

    pub fn m_row(&self, i: usize) -> &[f64] {
        self.m.row(i).to_slice().expect("standard layout")
    }

    pub fn a(&self, i: usize) -> f64 {
        self.a[i]
    }

    pub fn treatment(&self) -> &[f64] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn unit(&self, i: usize) -> Unit<'_> {
        Unit { x: self.x_row(i), a: self.a[i], m: self.m_row(i) }
    }

    /// Unit `i` with the treatment set to `a`.
    pub fn unit_at(&self, i: usize, a: f64) -> Unit<'_> {
        Unit { x: self.x_row(i), a, m: self.m_row(i) }
    }

    pub fn blocks(&self) -> &[BlockLayout] {
        &self.blocks
    }

    /// Layout of block `k`, 1-based.
    pub fn block(&self, k: usize) -> &BlockLayout {
        &self.blocks[k - 1]
    }

    /// Number of mediator columns in `M̄_k`.
    pub fn prefix_width(&self, k: usize) -> usize {
        self.blocks[..k].iter().map(|b| b.width).sum()
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn treatment_name(&self) -> &str {
        &self.treatment_name
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    /// Unit counts `(control, treated)`.
    pub fn arm_counts(&self) -> (usize, usize) {
        let treated = self.a.iter().filter(|&&v| v == 1.0).count();
        (self.n() - treated, treated)
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn binary_outcome(&self) -> bool {
        self.y.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Row subset. Arms may be empty in the result; callers check.
    pub fn subset(&self, rows: &[usize]) -> ObservedData {
        ObservedData {
            x: self.x.select(Axis(0), rows),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            m: self.m.select(Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            blocks: self.blocks.clone(),
            x_names: self.x_names.clone(),
            treatment_name: self.treatment_name.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Copy with a replaced outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<ObservedData> {
        if y.len() != self.n() {
            return Err(Error::Data("outcome length mismatch".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value in column '{}'", self.outcome_name)));
        }
        let mut d = self.clone();
        d.y = y;
        Ok(d)
    }

    /// Copy with extra covariate columns appended (used for false-covariate designs).
    pub fn with_extra_covariates(&self, extra: &Array2<f64>, names: &[String]) -> Result<ObservedData> {
        if extra.nrows() != self.n() || extra.ncols() != names.len() {
            return Err(Error::Data("extra covariate shape mismatch".into()));
        }
        let mut d = self.clone();
        d.x = ndarray::concatenate(Axis(1), &[self.x.view(), extra.view()])
            .map_err(|e| Error::Data(e.to_string()))?
            .as_standard_layout()
            .to_owned();
        d.x_names.extend(names.iter().cloned());
        Ok(d)
    }
}

/// Treatment assignments `(a_1, …, a_{K+1})`: `a_k` governs the path through
/// block `k`, and `a_{K+1}` the direct path to `Y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Regime(Vec<u8>);

impl Regime {
    pub fn new(assignments: Vec<u8>) -> Result<Self> {
        if assignments.is_empty() {
            return Err(Error::Config("regime must have at least one entry".into()));
        }
        if assignments.iter().any(|&v| v > 1) {
            return Err(Error::Config("regime entries must be 0 or 1".into()));
        }
        Ok(Regime(assignments))
    }

    /// `(a, a, …, a)` of length `k + 1`.
    pub fn constant(k: usize, a: u8) -> Self {
        Regime(vec![a.min(1); k + 1])
    }

    pub fn assignments(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of mediator blocks the regime addresses.
    pub fn k(&self) -> usize {
        self.0.len() - 1
    }

    /// `a_k` for `k` in `1..=K+1`, as a treatment value.
    pub fn a(&self, k: usize) -> f64 {
        f64::from(self.0[k - 1])
    }

    pub fn with(&self, position: usize, value: u8) -> Regime {
        let mut v = self.0.clone();
        v[position - 1] = value.min(1);
        Regime(v)
    }

    pub fn check_for(&self, data: &ObservedData) -> Result<()> {
        if self.len() != data.k() + 1 {
            return Err(Error::Config(format!(
                "regime {self} has length {}, data has K={} so length {} is required",
                self.len(),
                data.k(),
                data.k() + 1
            )));
        }
        Ok(())
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.0 {
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl FromStr for Regime {
    type Err = Error;

    /// Accepts `"011"` or `"0,1,1"`.
    fn from_str(s: &str) -> Result<Self> {
        let digits: Vec<u8> = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != ',')
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Config(format!("invalid regime character '{other}' in '{s}'"))),
            })
            .collect::<Result<_>>()?;
        Regime::new(digits)
    }
}

impl TryFrom<String> for Regime {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Regime> for String {
    fn from(r: Regime) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EffectKind {
    Nde,
    NieM1,
    TieM1,
    /// Natural path-specific effect through `M_k`, `k ≥ 2`.
    Npse(usize),
    /// Cumulative path-specific effect through `M_k`, `k ≥ 2`.
    Cpse(usize),
    Ate,
    Custom,
}

impl EffectKind {
    pub fn label(&self) -> String {
        match self {
            EffectKind::Nde => "NDE".into(),
            EffectKind::NieM1 => "NIE_M1".into(),
            EffectKind::TieM1 => "TIE_M1".into(),
            EffectKind::Npse(k) => format!("nPSE_M{k}"),
            EffectKind::Cpse(k) => format!("cPSE_M{k}"),
            EffectKind::Ate => "ATE".into(),
            EffectKind::Custom => "custom".into(),
        }
    }
}

impl FromStr for EffectKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let index = |prefix: &str| -> Result<usize> {
            lower[prefix.len()..]
                .trim_start_matches(['_', '(', 'm'])
                .trim_end_matches(')')
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse mediator index in '{s}'")))
        };
        match lower.as_str() {
            "nde" => Ok(EffectKind::Nde),
            "nie" | "nie_m1" => Ok(EffectKind::NieM1),
            "tie" | "tie_m1" => Ok(EffectKind::TieM1),
            "ate" => Ok(EffectKind::Ate),
            _ if lower.starts_with("npse") => Ok(EffectKind::Npse(index("npse")?)),
            _ if lower.starts_with("cpse") => Ok(EffectKind::Cpse(index("cpse")?)),
            _ => Err(Error::Config(format!("unknown effect kind '{s}'"))),
        }
    }
}

/// A contrast `θ(comparison) − θ(baseline)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectSpec {
    pub kind: EffectKind,
    pub comparison: Regime,
    pub baseline: Regime,
}

impl EffectSpec {
    /// Checks that the regime pair agrees with `kind`. Custom contrasts only
    /// need equal lengths.
    pub fn new(kind: EffectKind, comparison: Regime, baseline: Regime) -> Result<Self> {
        if comparison.len() != baseline.len() {
            return Err(Error::Config("comparison and baseline regimes differ in length".into()));
        }
        if kind != EffectKind::Custom {
            let expected = standard_regimes(comparison.k(), kind)?;
            if expected.comparison != comparison || expected.baseline != baseline {
                return Err(Error::Config(format!(
                    "{} requires regimes {} vs {}, got {} vs {}",
                    kind.label(),
                    expected.comparison,
                    expected.baseline,
                    comparison,
                    baseline
                )));
            }
        }
        Ok(EffectSpec { kind, comparison, baseline })
    }

    pub fn custom(comparison: Regime, baseline: Regime) -> Result<Self> {
        Self::new(EffectKind::Custom, comparison, baseline)
    }

    pub fn label(&self) -> String {
        match self.kind {
            EffectKind::Custom => format!("theta_{} - theta_{}", self.comparison, self.baseline),
            k => k.label(),
        }
    }
}

/// Regime pair defining a named effect for a model with `k` mediator blocks.
pub fn standard_regimes(k: usize, kind: EffectKind) -> Result<EffectSpec> {
    let zeros = |len: usize| vec![0u8; len];
    let (comparison, baseline) = match kind {
        EffectKind::Nde => {
            let mut c = zeros(k + 1);
            c[k] = 1;
            (c, zeros(k + 1))
        }
        EffectKind::Ate => (vec![1; k + 1], zeros(k + 1)),
        EffectKind::NieM1 => {
            need_mediator(k, 1)?;
            let mut c = zeros(k + 1);
            c[0] = 1;
            (c, zeros(k + 1))
        }
        EffectKind::TieM1 => {
            need_mediator(k, 1)?;
            let mut b = vec![1; k + 1];
            b[0] = 0;
            (vec![1; k + 1], b)
        }
        EffectKind::Npse(j) => {
            if j < 2 {
                return Err(Error::Config("nPSE requires k >= 2; use NIE_M1 for the first mediator".into()));
            }
            need_mediator(k, j)?;
            let mut c = zeros(k + 1);
            c[j - 1] = 1;
            (c, zeros(k + 1))
        }
        EffectKind::Cpse(j) => {
            if j < 2 {
                return Err(Error::Config("cPSE requires k >= 2; use TIE_M1 for the first mediator".into()));
            }
            need_mediator(k, j)?;
            let c: Vec<u8> = (1..=k + 1).map(|p| u8::from(p >= j)).collect();
            let b: Vec<u8> = (1..=k + 1).map(|p| u8::from(p > j)).collect();
            (c, b)
        }
        EffectKind::Custom => {
            return Err(Error::Config("custom contrasts have no standard regimes".into()));
        }
    };
    Ok(EffectSpec {
        kind,
        comparison: Regime(comparison),
        baseline: Regime(baseline),
    })
}

fn need_mediator(k: usize, j: usize) -> Result<()> {
    if j == 0 || j > k {
        return Err(Error::Config(format!("mediator index {j} out of range 1..={k}")));
    }
    Ok(())
}

/// Group-disparity data: no covariates, group indicator in the treatment slot.
#[derive(Debug, Clone)]
pub struct GroupedData {
    inner: ObservedData,
}

impl GroupedData {
    pub fn new(group: Vec<f64>, blocks: Vec<MediatorBlock>, y: Vec<f64>) -> Result<Self> {
        let n = group.len();
        let inner = ObservedData::new(Array2::zeros((n, 0)), group, blocks, y)?;
        Self::from_observed(inner)
    }

    pub fn from_observed(inner: ObservedData) -> Result<Self> {
        if inner.p() != 0 {
            return Err(Error::Data("grouped data must not carry covariates".into()));
        }
        let (n0, n1) = inner.arm_counts();
        if n0 < 2 || n1 < 2 {
            return Err(Error::Data(format!("each group needs at least 2 units (got {n0} and {n1})")));
        }
        Ok(GroupedData { inner })
    }

    pub fn data(&self) -> &ObservedData {
        &self.inner
    }
}

/// Output of [`validate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub k: usize,
    pub control: usize,
    pub treated: usize,
    pub block_dims: Vec<usize>,
    pub clip: f64,
    pub positivity_flags: Vec<PositivityFlag>,
}

/// A propensity stratum whose mean treatment probability for some arm is below the clip level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityFlag {
    pub stratum: usize,
    pub units: usize,
    pub mean_treated_prob: f64,
}

/// Structural summary plus a coarse positivity check (main-effects logistic
/// propensity, strata at its deciles).
pub fn validate(data: &ObservedData, clip: f64) -> Result<Diagnostics> {
    let (control, treated) = data.arm_counts();
    let props = crate::nuisance::glm::coarse_propensity(data)?;
    let mut order: Vec<usize> = (0..data.n()).collect();
    order.sort_by(|&i, &j| props[i].total_cmp(&props[j]));
    let strata = 10.min(data.n());
    let mut flags = Vec::new();
    for s in 0..strata {
        let lo = s * data.n() / strata;
        let hi = (s + 1) * data.n() / strata;
        if hi <= lo {
            continue;
        }
        let mean = order[lo..hi].iter().map(|&i| props[i]).sum::<f64>() / (hi - lo) as f64;
        if mean < clip || 1.0 - mean < clip {
            flags.push(PositivityFlag { stratum: s, units: hi - lo, mean_treated_prob: mean });
        }
    }
    Ok(Diagnostics {
        n: data.n(),
        k: data.k(),
        control,
        treated,
        block_dims: data.blocks().iter().map(|b| b.width).collect(),
        clip,
        positivity_flags: flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(a: Vec<f64>) -> Result<ObservedData> {
        let n = a.len();
        ObservedData::new(Array2::zeros((n, 0)), a, vec![], vec![0.0; n])
    }

    #[test]
    fn all_treated_is_empty_control_arm() {
        let err = tiny(vec![1.0; 4]).unwrap_err();
        assert!(err.to_string().contains("empty control arm"));
    }

    #[test]
    fn non_finite_names_column() {
        let x = Array2::from_shape_vec((2, 1), vec![1.0, f64::NAN]).unwrap();
        let err = ObservedData::with_names(x, vec!["age".into()], vec![0.0, 1.0], vec![], vec![0.0, 1.0], "a", "y")
            .unwrap_err();
        assert!(err.to_string().contains("'age'"));
    }

    #[test]
    fn balanced_k0_has_no_flags() {
        let d = tiny(vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap();
        let diag = validate(&d, 0.01).unwrap();
        assert_eq!(diag.k, 0);
        assert_eq!((diag.control, diag.treated), (5, 5));
        assert!(diag.positivity_flags.is_empty());
    }

    #[test]
    fn standard_regime_examples() {
        let nde = standard_regimes(2, EffectKind::Nde).unwrap();
        assert_eq!(nde.comparison.to_string(), "001");
        assert_eq!(nde.baseline.to_string(), "000");
        let c2 = standard_regimes(2, EffectKind::Cpse(2)).unwrap();
        assert_eq!(c2.comparison.to_string(), "011");
        assert_eq!(c2.baseline.to_string(), "001");
        let tie = standard_regimes(1, EffectKind::TieM1).unwrap();
        assert_eq!(tie.comparison.to_string(), "11");
        assert_eq!(tie.baseline.to_string(), "01");
        let ate = standard_regimes(3, EffectKind::Ate).unwrap();
        assert_eq!(ate.comparison.to_string(), "1111");
        assert_eq!(ate.baseline.to_string(), "0000");
        let n2 = standard_regimes(3, EffectKind::Npse(2)).unwrap();
        assert_eq!(n2.comparison.to_string(), "0100");
    }

    #[test]
    fn low_index_pse_is_redirected() {
        let e = standard_regimes(2, EffectKind::Cpse(1)).unwrap_err().to_string();
        assert!(e.contains("TIE_M1"));
        let e = standard_regimes(2, EffectKind::Npse(1)).unwrap_err().to_string();
        assert!(e.contains("NIE_M1"));
        assert!(standard_regimes(2, EffectKind::Cpse(3)).is_err());
    }

    #[test]
    fn spec_constructor_rejects_inconsistent_pair() {
        let c: Regime = "011".parse().unwrap();
        let b: Regime = "000".parse().unwrap();
        assert!(EffectSpec::new(EffectKind::Cpse(2), c.clone(), b.clone()).is_err());
        assert!(EffectSpec::custom(c, b).is_ok());
    }

    #[test]
    fn regime_round_trip() {
        let r: Regime = "0,1,1".parse().unwrap();
        assert_eq!(r.assignments(), &[0, 1, 1]);
        assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
        assert_eq!(r.a(1), 0.0);
        assert_eq!(r.a(3), 1.0);
        assert!("012".parse::<Regime>().is_err());
    }

    #[test]
    fn effect_kind_parsing() {
        assert_eq!("cPSE_M2".parse::<EffectKind>().unwrap(), EffectKind::Cpse(2));
        assert_eq!("npse(3)".parse::<EffectKind>().unwrap(), EffectKind::Npse(3));
        assert_eq!("NDE".parse::<EffectKind>().unwrap(), EffectKind::Nde);
    }
}
