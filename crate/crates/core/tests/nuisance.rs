mod common;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use pathmed::data::Unit;
use pathmed::nuisance::learner::select_stack_weights;
use pathmed::nuisance::{
    fit_density, fit_learner, fit_linear, fit_logistic, fit_nuisance_set, make_folds, Family, LearnerSettings,
    NuisanceFitter,
};
use pathmed::simulation::{generate, DgpCoefficients};
use pathmed::{FitOptions, LearnerKind, LearnerPolicy, Method, MediatorBlock, ObservedData, Regime};
use rand::Rng;

fn with_intercept(cols: &[Vec<f64>]) -> Array2<f64> {
    let n = cols[0].len();
    Array2::from_shape_fn((n, cols.len() + 1), |(i, j)| if j == 0 { 1.0 } else { cols[j - 1][i] })
}

#[test]
fn linear_fit_recovers_exact_line() {
    let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 2.0).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let fit = fit_linear(&with_intercept(&[x.clone()]), &y, 0.0).unwrap();
    assert!(fit.coef[0].abs() < 1e-10);
    assert!((fit.coef[1] - 2.0).abs() < 1e-10);
    for (xi, yi) in x.iter().zip(&y) {
        assert!((fit.predict(&[1.0, *xi]) - yi).abs() < 1e-10);
    }
}

#[test]
fn intercept_only_linear_fit_predicts_the_mean() {
    let y = [1.0, 4.0, 2.5, -0.5, 3.0];
    let rows = Array2::ones((5, 1));
    let fit = fit_linear(&rows, &y, 0.0).unwrap();
    let mean = y.iter().sum::<f64>() / 5.0;
    assert!((fit.predict(&[1.0]) - mean).abs() < 1e-12);
}

#[test]
fn ridge_linear_fit_matches_normal_equations() {
    let mut rng = pathmed::rng::stream(3, 0);
    let rows = Array2::from_shape_fn((20, 3), |_| rng.gen_range(-2.0..2.0));
    let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for ridge in [0.0, 0.3] {
        let fit = fit_linear(&rows, &y, ridge).unwrap();
        let x = DMatrix::from_fn(20, 3, |i, j| rows[(i, j)]);
        let yv = DVector::from_vec(y.clone());
        let oracle = (x.transpose() * &x + DMatrix::identity(3, 3) * ridge).try_inverse().unwrap() * x.transpose() * yv;
        for j in 0..3 {
            assert!((fit.coef[j] - oracle[j]).abs() < 1e-8, "ridge {ridge}: {:?} vs {oracle}", fit.coef);
        }
    }
}

#[test]
fn logistic_intercept_only_half_ones() {
    let y: Vec<f64> = (0..40).map(|i| f64::from(i % 2)).collect();
    let fit = fit_logistic(&Array2::ones((40, 1)), &y, 0.0).unwrap();
    assert!(fit.coef[0].abs() < 1e-8);
    assert!((fit.predict(&[1.0]) - 0.5).abs() < 1e-8);
}

#[test]
fn logistic_all_zero_response_with_default_ridge() {
    let rows = with_intercept(&[(0..30).map(|i| i as f64 / 30.0).collect()]);
    let fit = fit_logistic(&rows, &[0.0; 30], 1e-6).unwrap();
    for i in 0..30 {
        assert!(fit.predict(rows.row(i).as_slice().unwrap()) < 0.01);
    }
}

fn loglik(rows: &Array2<f64>, y: &[f64], b: &[f64]) -> f64 {
    rows.rows()
        .into_iter()
        .zip(y)
        .map(|(r, &yi)| {
            let eta: f64 = r.iter().zip(b).map(|(x, c)| x * c).sum();
            yi * eta - (1.0 + eta.exp()).ln()
        })
        .sum()
}

#[test]
fn logistic_solution_beats_every_grid_point() {
    let mut rng = pathmed::rng::stream(30, 0);
    let x: Vec<f64> = (0..30).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| f64::from(u8::from(rng.gen::<f64>() < 1.0 / (1.0 + (-(0.4 + 1.2 * v)).exp())))).collect();
    let rows = with_intercept(&[x]);
    let fit = fit_logistic(&rows, &y, 0.0).unwrap();
    let best = loglik(&rows, &y, &fit.coef);
    for i in -30..=30 {
        for j in -30..=30 {
            let b = [i as f64 * 0.1, j as f64 * 0.1];
            assert!(best >= loglik(&rows, &y, &b) - 1e-12);
        }
    }
    // The IRLS objective never decreases.
    for w in fit.objective.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{:?}", fit.objective);
    }
}

#[test]
fn saturated_binary_density_equals_empirical_frequencies() {
    let data = common::binary_data(400, 2);
    let model = fit_density(&data, 1, vec![0], LearnerKind::Saturated, &LearnerSettings::default(), 1).unwrap();
    let support = model.support().unwrap().to_vec();
    let mut scratch = Vec::new();
    for x in [0.0, 1.0] {
        for a in [0.0, 1.0] {
            let rows: Vec<usize> = (0..data.n()).filter(|&i| data.x_row(i)[0] == x && data.a(i) == a).collect();
            let probs = model.pmf(Unit { x: &[x], a, m: &[] }, &mut scratch).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            for (value, p) in support.iter().zip(&probs) {
                let hits = rows.iter().filter(|&&i| data.m_row(i)[0] == value[0]).count();
                assert!((p - hits as f64 / rows.len() as f64).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gaussian_density_recovers_mediator_coefficients() {
    let coeffs = DgpCoefficients::default();
    let data = generate(&coeffs, 20_000, 41).unwrap();
    let model = fit_density(&data, 1, vec![0, 1, 2, 3], LearnerKind::Glm, &LearnerSettings::default(), 1).unwrap();
    let coef = model.mean_coefficients().unwrap();
    // Classical OLS standard errors from the same design.
    let n = data.n();
    let design = DMatrix::from_fn(n, 6, |i, j| match j {
        0 => 1.0,
        5 => data.a(i),
        _ => data.x_row(i)[j - 1],
    });
    let xtx_inv = (design.transpose() * &design).try_inverse().unwrap();
    let sigma = model.sigma().unwrap();
    for j in 0..6 {
        let se = sigma * xtx_inv[(j, j)].sqrt();
        assert!((coef[j] - coeffs.beta_m1[j]).abs() < 3.0 * se, "coef {j}: {} vs {} (se {se})", coef[j], coeffs.beta_m1[j]);
    }
}

#[test]
fn densities_normalise_at_random_points() {
    let mut rng = pathmed::rng::stream(5, 5);
    let cont = generate(&DgpCoefficients::default(), 500, 3).unwrap();
    let gauss = fit_density(&cont, 2, vec![0, 1, 2, 3], LearnerKind::Glm, &LearnerSettings::default(), 1).unwrap();
    let binary = common::binary_data(300, 4);
    let table = fit_density(&binary, 2, vec![0], LearnerKind::Glm, &LearnerSettings::default(), 1).unwrap();
    let mut scratch = Vec::new();
    for _ in 0..5 {
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let m = [rng.gen_range(-1.0..1.0), 0.0];
        let cond = Unit { x: &x, a: 1.0, m: &m };
        let (mu, sd) = gauss.gaussian(cond, &mut scratch).unwrap();
        let steps = 20_000;
        let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for s in 0..=steps {
            let v = lo + s as f64 * h;
            let f = gauss.density(cond, &[v], &mut scratch);
            integral += if s == 0 || s == steps { 0.5 * f } else { f };
        }
        assert!((integral * h - 1.0).abs() < 1e-6);

        let xb = [f64::from(u8::from(rng.gen::<bool>()))];
        let mb = [f64::from(u8::from(rng.gen::<bool>())), 0.0];
        let probs = table.pmf(Unit { x: &xb, a: 0.0, m: &mb }, &mut scratch).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn multivariate_continuous_block_is_refused() {
    let n = 20;
    let mut rng = pathmed::rng::stream(1, 1);
    let values = Array2::from_shape_fn((n, 2), |_| rng.gen::<f64>());
    let data = ObservedData::new(
        Array2::zeros((n, 0)),
        (0..n).map(|i| f64::from(u8::from(i % 2 == 0))).collect(),
        vec![MediatorBlock::new("m", vec!["m_a".into(), "m_b".into()], vec![false, false], values)],
        (0..n).map(|i| i as f64).collect(),
    )
    .unwrap();
    let err = fit_density(&data, 1, vec![], LearnerKind::Glm, &LearnerSettings::default(), 1).unwrap_err();
    assert!(err.to_string().contains("eif2"), "{err}");
}

fn structured(n: usize) -> (Array2<f64>, Vec<f64>) {
    let mut rng = pathmed::rng::stream(8, 8);
    let base = Array2::from_shape_fn((n, 1), |_| rng.gen_range(-2.0..2.0));
    let y = (0..n).map(|i| 3.0 * base[(i, 0)] + 0.2 * rng.gen_range(-1.0..1.0)).collect();
    (base, y)
}

#[test]
fn single_candidate_stack_has_unit_weight() {
    let (base, y) = structured(100);
    let settings = LearnerSettings { stack_candidates: vec![LearnerKind::Glm], ..LearnerSettings::default() };
    let fit = fit_learner(LearnerKind::Stack, &base, &y, None, Family::Continuous, &settings, 1).unwrap();
    let w = fit.stack_weights().unwrap();
    assert_eq!(w.len(), 1);
    assert_eq!(w[0], (LearnerKind::Glm, 1.0));
}

#[test]
fn stack_prefers_the_true_specification() {
    let (base, y) = structured(200);
    // Cell means on a continuous predictor never see a test row, so they
    // predict the training mean: an intercept-only candidate.
    let cands = [LearnerKind::Glm, LearnerKind::Saturated];
    let sel = select_stack_weights(&cands, &base, &y, Family::Continuous, &LearnerSettings::default(), 2).unwrap();
    assert!(sel.candidate_loss[0] < sel.candidate_loss[1]);
    assert!(sel.weights[0] >= 0.8, "{:?}", sel.weights);
    let min = sel.candidate_loss.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(sel.ensemble_loss <= min + 1e-12);
}

#[test]
fn stack_weights_form_a_simplex() {
    let data = generate(&DgpCoefficients::default(), 300, 12).unwrap();
    let base = data.x().clone();
    for (family, y) in [
        (Family::Continuous, data.y().to_vec()),
        (Family::Binary, data.treatment().to_vec()),
    ] {
        let fit = fit_learner(LearnerKind::Stack, &base, &y, None, family, &LearnerSettings::default(), 4).unwrap();
        let w = fit.stack_weights().unwrap();
        assert!(w.iter().all(|(_, v)| *v >= 0.0));
        assert!((w.iter().map(|(_, v)| v).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn folds_are_balanced_and_reproducible() {
    let f = make_folds(10, 5, 1).unwrap();
    assert_eq!(f.sizes(), vec![2; 5]);
    assert_eq!(make_folds(2000, 5, 9).unwrap().sizes(), vec![400; 5]);
    assert_eq!(make_folds(37, 4, 77).unwrap(), make_folds(37, 4, 77).unwrap());
    let s = make_folds(37, 4, 77).unwrap().sizes();
    assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
    assert!(make_folds(3, 5, 1).is_err());
}

#[test]
fn k0_set_has_only_propensity_and_outcome() {
    let full = generate(&DgpCoefficients::default(), 200, 1).unwrap();
    let data = ObservedData::new(full.x().clone(), full.treatment().to_vec(), vec![], full.y().to_vec()).unwrap();
    let regime = Regime::new(vec![1]).unwrap();
    let set = fit_nuisance_set(&data, &regime, &LearnerPolicy::default(), &FitOptions::default(), Method::Eif2.needs()).unwrap();
    assert_eq!(set.pi.len(), 1);
    assert_eq!(set.mu.len(), 1);
    assert!(set.f.is_empty());
    assert!(set.pi[0].is_some() && set.mu[0].is_some());
}

#[test]
fn saturated_mu0_is_the_inner_gformula_sum() {
    let data = common::binary_data(500, 11);
    assert!(common::full_support(&data));
    for regime in common::all_regimes(2) {
        let fitter = NuisanceFitter::new(&data, LearnerPolicy::uniform(LearnerKind::Saturated), FitOptions::default());
        let set = fitter.nuisance_set(&regime, Method::RegressionImpute.needs()).unwrap();
        let mu0 = set.mu(0).unwrap();
        for x in [0.0, 1.0] {
            // Restrict to units with this x and average the oracle over a one-point X law.
            let rows: Vec<usize> = (0..data.n()).filter(|&i| data.x_row(i)[0] == x).collect();
            let sub = data.subset(&rows);
            let inner = common::enumerate_theta(&sub, &regime);
            let pred = mu0.predict(Unit { x: &[x], a: regime.a(1), m: &[] });
            assert!((pred - inner).abs() < 1e-10, "{regime}, x={x}: {pred} vs {inner}");
        }
    }
}

#[test]
fn constant_outcome_gives_constant_chain() {
    let data = generate(&DgpCoefficients::default(), 300, 2).unwrap().with_outcome(vec![2.5; 300]).unwrap();
    let regime: Regime = "011".parse().unwrap();
    let opts = FitOptions { chain: pathmed::nuisance::ChainMode::Full, ..FitOptions::default() };
    let set = fit_nuisance_set(&data, &regime, &LearnerPolicy::default(), &opts, Method::Eif2.needs()).unwrap();
    for level in 0..=2 {
        let mu = set.mu(level).unwrap();
        for i in (0..300).step_by(17) {
            let a = regime.a(level + 1);
            assert!((mu.predict(data.unit_at(i, a)) - 2.5).abs() < 1e-6);
        }
    }
}

#[test]
fn nuisance_fits_are_bit_reproducible() {
    let data = generate(&DgpCoefficients::default(), 400, 5).unwrap();
    let regime: Regime = "011".parse().unwrap();
    let policy = LearnerPolicy::uniform(LearnerKind::Stack);
    let a = fit_nuisance_set(&data, &regime, &policy, &FitOptions::default(), Method::Eif2.needs()).unwrap();
    let b = fit_nuisance_set(&data, &regime, &policy, &FitOptions::default(), Method::Eif2.needs()).unwrap();
    for i in 0..data.n() {
        let u = data.unit(i);
        assert_eq!(a.pi(1).unwrap().predict(u).to_bits(), b.pi(1).unwrap().predict(u).to_bits());
        assert_eq!(a.mu(0).unwrap().predict(u).to_bits(), b.mu(0).unwrap().predict(u).to_bits());
    }
}
