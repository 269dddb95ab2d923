use ndarray::Array2;
use pathmed::inference::{
    bootstrap, eif_variance, normal_quantile, rubin_pool, wald_ci, BootstrapOptions, ADAPTIVE_BOOTSTRAP_WARNING,
};
use pathmed::ObservedData;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[test]
fn eif_variance_examples() {
    assert_eq!(eif_variance(&[0.0; 10]).unwrap(), 0.0);
    assert!((eif_variance(&[-1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    assert!(eif_variance(&[1.0]).is_err());
    let mut rng = pathmed::rng::stream(5, 0);
    for len in [2usize, 17, 1000] {
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut second = 0.0;
        for e in &v {
            second += e * e;
        }
        let oracle = second / len as f64 / len as f64;
        assert!((eif_variance(&v).unwrap() - oracle).abs() < 1e-12);
    }
}

fn cdf_by_trapezoid(z: f64) -> f64 {
    let steps = 200_000;
    let lo = -12.0;
    let h = (z - lo) / steps as f64;
    let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = 0.5 * (f(lo) + f(z));
    for i in 1..steps {
        s += f(lo + i as f64 * h);
    }
    s * h
}

#[test]
fn wald_interval_matches_bisection_quantile() {
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if cdf_by_trapezoid(mid) < 0.975 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    let (a, b) = wald_ci(0.0, 1.0, 0.95);
    assert!((b - z).abs() < 1e-5 && (a + z).abs() < 1e-5, "{a} {b} vs {z}");
    assert!((b - 1.959964).abs() < 1e-5);
    assert!((normal_quantile(0.975) - z).abs() < 1e-5);
}

#[test]
fn zero_variance_interval_is_degenerate() {
    assert_eq!(wald_ci(3.25, 0.0, 0.9), (3.25, 3.25));
    for (p, v, l) in [(1.0, 2.0, 0.5), (-4.0, 0.01, 0.99), (0.0, 7.0, 0.8)] {
        let (a, b) = wald_ci(p, v, l);
        assert!(a <= p && p <= b);
    }
}

fn normal_sample(n: usize, seed: u64) -> ObservedData {
    let mut rng = pathmed::rng::stream(seed, 1);
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let a: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
    ObservedData::new(Array2::zeros((n, 0)), a, vec![], y).unwrap()
}

fn sample_mean(d: &ObservedData, _: u64) -> pathmed::Result<f64> {
    Ok(d.y().iter().sum::<f64>() / d.n() as f64)
}

#[test]
fn bootstrap_of_constant_data_has_zero_width() {
    let d = normal_sample(50, 1).with_outcome(vec![4.0; 50]).unwrap();
    let r = bootstrap(&d, &BootstrapOptions { replicates: 50, ..BootstrapOptions::default() }, sample_mean).unwrap();
    assert_eq!(r.ci, (4.0, 4.0));
    assert_eq!(r.se, 0.0);
}

#[test]
fn bootstrap_is_deterministic_per_seed() {
    let d = normal_sample(100, 2);
    let o = BootstrapOptions { replicates: 200, seed: 99, ..BootstrapOptions::default() };
    let a = bootstrap(&d, &o, sample_mean).unwrap();
    let b = bootstrap(&d, &o, sample_mean).unwrap();
    assert_eq!(a.replicates, b.replicates);
    let c = bootstrap(&d, &BootstrapOptions { seed: 100, ..o }, sample_mean).unwrap();
    assert_ne!(a.replicates, c.replicates);
}

#[test]
fn bootstrap_se_of_a_mean() {
    let n = 500;
    let d = normal_sample(n, 3);
    let y = d.y();
    let m = y.iter().sum::<f64>() / n as f64;
    let s = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let oracle = s / (n as f64).sqrt();
    let r = bootstrap(&d, &BootstrapOptions { replicates: 1000, ..BootstrapOptions::default() }, sample_mean).unwrap();
    assert!((r.se / oracle - 1.0).abs() < 0.15, "{} vs {oracle}", r.se);
    assert!(r.ci.0 < m && m < r.ci.1);
}

#[test]
fn bootstrap_validates_and_warns() {
    let d = normal_sample(40, 4);
    assert!(bootstrap(&d, &BootstrapOptions { replicates: 1, ..BootstrapOptions::default() }, sample_mean).is_err());
    let r = bootstrap(
        &d,
        &BootstrapOptions { replicates: 10, adaptive_learners: true, ..BootstrapOptions::default() },
        sample_mean,
    )
    .unwrap();
    assert_eq!(r.warnings, vec![ADAPTIVE_BOOTSTRAP_WARNING.to_string()]);
    // One treated unit in 40: about a third of resamples lose it.
    let mut a = vec![0.0; 40];
    a[0] = 1.0;
    let lone = ObservedData::new(Array2::zeros((40, 0)), a, vec![], vec![1.0; 40]).unwrap();
    let ok = bootstrap(&lone, &BootstrapOptions { replicates: 50, ..BootstrapOptions::default() }, sample_mean).unwrap();
    assert!(ok.redraws > 0);
    let strict = BootstrapOptions { replicates: 50, max_redraws: 0, ..BootstrapOptions::default() };
    assert!(bootstrap(&lone, &strict, sample_mean).is_err());
}

#[test]
fn rubin_pooling_examples() {
    let p = rubin_pool(&[1.0, 3.0], &[1.0, 1.0]).unwrap();
    assert_eq!((p.point, p.within, p.between, p.total), (2.0, 1.0, 2.0, 4.0));
    assert_eq!(p.se, 2.0);
    let one = rubin_pool(&[0.7], &[0.04]).unwrap();
    assert_eq!((one.point, one.total, one.between), (0.7, 0.04, 0.0));
    let same = rubin_pool(&[1.5; 4], &[0.2, 0.3, 0.1, 0.4]).unwrap();
    assert_eq!(same.between, 0.0);
    assert!((same.total - 0.25).abs() < 1e-15);
    assert!(rubin_pool(&[1.0, 2.0], &[1.0]).is_err());
    assert!(rubin_pool(&[], &[]).is_err());
}

#[test]
fn rubin_pooling_ignores_imputation_order() {
    let pts = [0.3, -0.1, 0.8, 0.25, 0.4];
    let var = [0.02, 0.05, 0.01, 0.03, 0.04];
    let base = rubin_pool(&pts, &var).unwrap();
    let order = [3usize, 0, 4, 1, 2];
    let p2: Vec<f64> = order.iter().map(|&i| pts[i]).collect();
    let v2: Vec<f64> = order.iter().map(|&i| var[i]).collect();
    let perm = rubin_pool(&p2, &v2).unwrap();
    assert!((base.point - perm.point).abs() < 1e-15);
    assert!((base.total - perm.total).abs() < 1e-15);
    assert!(base.total >= base.within && base.between >= 0.0);
}
