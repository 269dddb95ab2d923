use ndarray::Array2;
use pathmed::inference::{rubin_pool, wald_ci};
use pathmed::{decompose_ate, EstimationSettings, EstimatorOptions, MediatorBlock, Method, ObservedData, Regime};
use proptest::prelude::*;

fn small_data(rows: &[(f64, bool, f64, f64, f64)]) -> Option<ObservedData> {
    let n = rows.len();
    let a: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r.1))).collect();
    let treated = a.iter().filter(|&&v| v == 1.0).count();
    if treated < 4 || n - treated < 4 {
        return None;
    }
    let x = Array2::from_shape_fn((n, 1), |(i, _)| rows[i].0);
    let m1 = rows.iter().map(|r| r.2 + r.0 * 0.3).collect();
    let m2 = rows.iter().map(|r| r.3 - r.2).collect();
    let y = rows.iter().map(|r| r.4 + r.3 + f64::from(u8::from(r.1))).collect();
    ObservedData::new(x, a, vec![MediatorBlock::continuous("m1", m1), MediatorBlock::continuous("m2", m2)], y).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn regime_text_round_trips(bits in prop::collection::vec(0u8..2, 1..8)) {
        let r = Regime::new(bits.clone()).unwrap();
        let back: Regime = r.to_string().parse().unwrap();
        prop_assert_eq!(back.assignments(), &bits[..]);
    }

    #[test]
    fn decompositions_telescope(
        rows in prop::collection::vec((-2.0..2.0f64, any::<bool>(), -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), 30..60),
        flip in 0usize..3,
    ) {
        let Some(data) = small_data(&rows) else { return Ok(()); };
        let settings = EstimationSettings {
            estimator: EstimatorOptions { mc_draws: 10, ..EstimatorOptions::default() },
            ..EstimationSettings::default()
        };
        let orders = [[3usize, 2, 1], [1, 2, 3], [2, 3, 1]];
        for m in [Method::Eif2, Method::RegressionImpute, Method::WeightingA] {
            let d = decompose_ate(&data, &m, Some(&orders[flip]), &settings).unwrap();
            prop_assert!(d.telescoping_error() <= 1e-10 * d.ate.point.abs().max(1.0));
        }
    }

    #[test]
    fn wald_interval_contains_the_point(point in -1e6..1e6f64, var in 0.0..1e4f64, level in 0.01..0.999f64) {
        let (lo, hi) = wald_ci(point, var, level);
        prop_assert!(lo <= point && point <= hi);
    }

    #[test]
    fn rubin_invariants(entries in prop::collection::vec((-10.0..10.0f64, 0.0..5.0f64), 1..10), rot in 0usize..10) {
        let pts: Vec<f64> = entries.iter().map(|e| e.0).collect();
        let var: Vec<f64> = entries.iter().map(|e| e.1).collect();
        let p = rubin_pool(&pts, &var).unwrap();
        prop_assert!(p.between >= 0.0);
        prop_assert!(p.total >= p.within);
        let mut rp = pts.clone();
        let mut rv = var.clone();
        let k = rot % pts.len();
        rp.rotate_left(k);
        rv.rotate_left(k);
        let q = rubin_pool(&rp, &rv).unwrap();
        prop_assert!((p.point - q.point).abs() < 1e-12);
        prop_assert!((p.total - q.total).abs() < 1e-9 * p.total.max(1.0));
    }
}
