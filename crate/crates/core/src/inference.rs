//! Variance estimates, confidence intervals, bootstrap and multiple-imputation pooling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ObservedData;
use crate::error::{Error, Result};
use crate::rng;

/// `P_n[φ̂²]/n`, the plug-in variance of an asymptotically linear estimator.
pub fn eif_variance(eif: &[f64]) -> Result<f64> {
    let n = eif.len();
    if n < 2 {
        return Err(Error::Data("variance needs at least two units".into()));
    }
    let v = eif.iter().map(|e| e * e).sum::<f64>() / n as f64 / n as f64;
    if !v.is_finite() {
        return Err(Error::Numeric("non-finite influence-function values".into()));
    }
    Ok(v)
}

/// Standard normal quantile (Wichura's AS241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r + 67265.770_927_008_7) * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_4)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_6)
            / (((((((r * 5226.495_278_852_546 + 28729.085_735_721_943) * r + 39307.895_800_092_71) * r
                + 21213.794_301_586_596)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r + 0.241_780_725_177_450_6) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_07)
                * r
                + 0.689_767_334_985_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((r * 2.044_263_103_389_939_8e-15 + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_887_9)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Standard normal CDF via a Chebyshev-fitted `erfc` (relative error below 1.2e-7).
pub fn normal_cdf(z: f64) -> f64 {
    let x = -z / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.5 * x.abs());
    let poly = -x * x - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07 + t * (-1.135_203_98 + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let erfc = t * poly.exp();
    let erfc = if x >= 0.0 { erfc } else { 2.0 - erfc };
    0.5 * erfc
}

/// Two-sided Wald interval `point ± z·sqrt(variance)` at the given confidence level.
pub fn wald_ci(point: f64, variance: f64, level: f64) -> (f64, f64) {
    let half = normal_quantile(0.5 + level / 2.0) * variance.max(0.0).sqrt();
    (point - half, point + half)
}

/// Two-sided p-value for `H0: value = 0`.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        2.0 * normal_cdf(-(estimate / se).abs())
    } else {
        f64::NAN
    }
}

/// Type-7 (linear interpolation) sample quantile of sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
    /// Resampling attempts per replicate before giving up on an empty arm.
    pub max_redraws: usize,
    /// Set when the statistic fits data-adaptive learners; the result then
    /// carries a warning that the bootstrap is not justified.
    pub adaptive_learners: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions { replicates: 1000, level: 0.95, seed: 20240521, max_redraws: 10, adaptive_learners: false }
    }
}

pub const ADAPTIVE_BOOTSTRAP_WARNING: &str =
    "bootstrap with data-adaptive learners is not theoretically justified; prefer cross-fitted EIF intervals";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: Vec<f64>,
    pub se: f64,
    pub ci: (f64, f64),
    /// Resamples discarded because an arm was empty.
    pub redraws: usize,
    /// Replicates whose statistic failed; excluded from the interval.
    pub failures: usize,
    pub warnings: Vec<String>,
}

/// Nonparametric bootstrap with percentile interval. Each replicate uses
/// its own seed, so results do not depend on thread scheduling.
pub fn bootstrap<F>(data: &ObservedData, opts: &BootstrapOptions, statistic: F) -> Result<BootstrapResult>
where
    F: Fn(&ObservedData, u64) -> Result<f64> + Sync,
{
    use rand::Rng;
    if opts.replicates < 2 {
        return Err(Error::Config("bootstrap needs at least 2 replicates".into()));
    }
    let mut warnings = Vec::new();
    if opts.adaptive_learners {
        log::warn!("{ADAPTIVE_BOOTSTRAP_WARNING}");
        warnings.push(ADAPTIVE_BOOTSTRAP_WARNING.to_string());
    }
    let n = data.n();
    let out: Vec<(Option<f64>, usize)> = (0..opts.replicates)
        .into_par_iter()
        .map(|b| -> Result<(Option<f64>, usize)> {
            let mut rng = rng::stream(opts.seed, b as u64);
            let mut redraws = 0;
            loop {
                let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
                let sample = data.subset(&rows);
                let (c, t) = sample.arm_counts();
                if c == 0 || t == 0 {
                    redraws += 1;
                    if redraws > opts.max_redraws {
                        return Err(Error::Data(format!(
                            "bootstrap replicate {b} drew an empty treatment arm {redraws} times"
                        )));
                    }
                    continue;
                }
                let v = statistic(&sample, rng::derive(opts.seed ^ 0xB007, b as u64)).ok().filter(|v| v.is_finite());
                return Ok((v, redraws));
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let redraws = out.iter().map(|(_, r)| r).sum();
    let mut reps: Vec<f64> = out.iter().filter_map(|(v, _)| *v).collect();
    let failures = opts.replicates - reps.len();
    if reps.len() < 2 {
        return Err(Error::Numeric("fewer than two bootstrap replicates succeeded".into()));
    }
    let m = reps.iter().sum::<f64>() / reps.len() as f64;
    let se = (reps.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps.len() - 1) as f64).sqrt();
    let mut sorted = reps.clone();
    sorted.sort_by(f64::total_cmp);
    let alpha = 1.0 - opts.level;
    let ci = (quantile_sorted(&sorted, alpha / 2.0), quantile_sorted(&sorted, 1.0 - alpha / 2.0));
    reps.shrink_to_fit();
    Ok(BootstrapResult { replicates: reps, se, ci, redraws, failures, warnings })
}

/// Rubin's rules for `m` completed-data analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    /// Mean of the per-imputation points.
    pub point: f64,
    /// Mean within-imputation variance `W̄`.
    pub within: f64,
    /// Between-imputation variance `B`.
    pub between: f64,
    /// `T = W̄ + (1 + 1/m) B`.
    pub total: f64,
    pub se: f64,
    /// Barnard-Rubin style large-sample degrees of freedom.
    pub df: f64,
    pub m: usize,
}

impl PooledEstimate {
    /// Normal-reference interval on the pooled scale.
    pub fn interval(&self, level: f64) -> (f64, f64) {
        wald_ci(self.point, self.total, level)
    }

    pub fn p_value(&self) -> f64 {
        wald_p_value(self.point, self.se)
    }
}

/// Pools per-imputation points and variances.
pub fn rubin_pool(points: &[f64], variances: &[f64]) -> Result<PooledEstimate> {
    let m = points.len();
    if m == 0 {
        return Err(Error::Config("nothing to pool".into()));
    }
    if variances.len() != m {
        return Err(Error::Config(format!("{m} points but {} variances", variances.len())));
    }
    let mf = m as f64;
    let point = points.iter().sum::<f64>() / mf;
    let within = variances.iter().sum::<f64>() / mf;
    let between = if m > 1 {
        points.iter().map(|p| (p - point).powi(2)).sum::<f64>() / (mf - 1.0)
    } else {
        0.0
    };
    let total = within + (1.0 + 1.0 / mf) * between;
    let df = if between > 0.0 && m > 1 {
        (mf - 1.0) * (1.0 + within / ((1.0 + 1.0 / mf) * between)).powi(2)
    } else {
        f64::INFINITY
    };
    Ok(PooledEstimate { point, within, between, total, se: total.sqrt(), df, m })
}
