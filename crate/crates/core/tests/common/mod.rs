//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use pathmed::nuisance::LearnerKind;
use pathmed::{EstimationSettings, EstimatorOptions, LearnerPolicy, MediatorBlock, ObservedData, Regime};
use rand::Rng;

fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn bern<R: Rng>(rng: &mut R, p: f64) -> f64 {
    f64::from(u8::from(rng.gen::<f64>() < p))
}

/// All-binary `(X, A, M_1, M_2, Y)` with one covariate and effects on every arrow.
pub fn binary_data(n: usize, seed: u64) -> ObservedData {
    let mut rng = pathmed::rng::stream(seed, 7);
    let (mut x, mut a, mut m1, mut m2, mut y) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let xi = bern(&mut rng, 0.5);
        let ai = bern(&mut rng, expit(-0.2 + 0.6 * xi));
        let m1i = bern(&mut rng, expit(-0.3 + 0.5 * xi + 0.8 * ai));
        let m2i = bern(&mut rng, expit(0.2 - 0.4 * xi + 0.7 * ai + 0.6 * m1i));
        let yi = bern(&mut rng, expit(-0.5 + 0.3 * xi + 0.6 * ai + 0.5 * m1i + 0.8 * m2i - 0.4 * ai * m2i));
        x.push(xi);
        a.push(ai);
        m1.push(m1i);
        m2.push(m2i);
        y.push(yi);
    }
    ObservedData::new(
        Array2::from_shape_vec((n, 1), x).unwrap(),
        a,
        vec![MediatorBlock::discrete("m1", m1), MediatorBlock::discrete("m2", m2)],
        y,
    )
    .unwrap()
}

/// Counts of every `(x, a, m1, m2)` cell; all 16 must be present for the
/// enumeration oracle to be defined.
pub fn full_support(data: &ObservedData) -> bool {
    let mut cells = std::collections::HashSet::new();
    for i in 0..data.n() {
        let m = data.m_row(i);
        cells.insert((data.x_row(i)[0] as u8, data.a(i) as u8, m[0] as u8, m[1] as u8));
    }
    cells.len() == 16
}

/// Direct evaluation of the g-formula with empirical frequencies:
/// `Σ_x p(x) Σ_{m1} p(m1|x,a1) Σ_{m2} p(m2|x,a2,m1) E[Y|x,a3,m1,m2]`.
pub fn enumerate_theta(data: &ObservedData, regime: &Regime) -> f64 {
    let (a1, a2, a3) = (regime.a(1) as u8, regime.a(2) as u8, regime.a(3) as u8);
    let mut cnt: HashMap<(u8, u8, u8, u8), (f64, f64)> = HashMap::new();
    for i in 0..data.n() {
        let m = data.m_row(i);
        let key = (data.x_row(i)[0] as u8, data.a(i) as u8, m[0] as u8, m[1] as u8);
        let e = cnt.entry(key).or_insert((0.0, 0.0));
        e.0 += 1.0;
        e.1 += data.y()[i];
    }
    let count = |f: &dyn Fn(&(u8, u8, u8, u8)) -> bool| -> f64 { cnt.iter().filter(|(k, _)| f(k)).map(|(_, v)| v.0).sum() };
    let n = data.n() as f64;
    let mut theta = 0.0;
    for x in 0..2u8 {
        let px = count(&|k| k.0 == x) / n;
        if px == 0.0 {
            continue;
        }
        let nxa1 = count(&|k| k.0 == x && k.1 == a1);
        for m1 in 0..2u8 {
            let pm1 = count(&|k| k.0 == x && k.1 == a1 && k.2 == m1) / nxa1;
            let nxa2m1 = count(&|k| k.0 == x && k.1 == a2 && k.2 == m1);
            for m2 in 0..2u8 {
                let pm2 = count(&|k| k.0 == x && k.1 == a2 && k.2 == m1 && k.3 == m2) / nxa2m1;
                let (c, s) = cnt[&(x, a3, m1, m2)];
                theta += px * pm1 * pm2 * (s / c);
            }
        }
    }
    theta
}

pub fn all_regimes(k: usize) -> Vec<Regime> {
    (0..1u32 << (k + 1))
        .map(|bits| Regime::new((0..=k).map(|j| ((bits >> j) & 1) as u8).collect()).unwrap())
        .collect()
}

/// Saturated learners everywhere, no clipping, full-sample fits.
pub fn saturated_settings() -> EstimationSettings {
    EstimationSettings {
        policy: LearnerPolicy::uniform(LearnerKind::Saturated),
        estimator: EstimatorOptions { clip: 0.0, ..EstimatorOptions::default() },
        ..EstimationSettings::default()
    }
}

/// Single-covariate, single-continuous-mediator data with a binary treatment.
pub fn small_continuous(n: usize, seed: u64) -> ObservedData {
    let mut rng = pathmed::rng::stream(seed, 3);
    let (mut x, mut a, mut m, mut y) = (vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let xi: f64 = rng.gen_range(-1.0..1.0);
        let ai = bern(&mut rng, expit(0.3 * xi));
        let mi = 0.5 * xi + 0.7 * ai + rng.gen_range(-1.0..1.0);
        let yi = 1.0 + xi + 0.5 * ai + 0.8 * mi + rng.gen_range(-1.0..1.0);
        x.push(xi);
        a.push(ai);
        m.push(mi);
        y.push(yi);
    }
    ObservedData::new(Array2::from_shape_vec((n, 1), x).unwrap(), a, vec![MediatorBlock::continuous("m", m)], y).unwrap()
}
