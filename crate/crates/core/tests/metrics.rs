use fracergo::metrics::{fit_subexponential_points, gamma_exponent, tv_from_coupling, wasserstein2_1d};

/// Equal-size quantile matching after replicating each sample point so
/// that both samples have `n m` atoms.
fn replicated_w2(a: &[f64], b: &[f64]) -> f64 {
    let mut x: Vec<f64> = a.iter().flat_map(|v| std::iter::repeat(*v).take(b.len())).collect();
    let mut y: Vec<f64> = b.iter().flat_map(|v| std::iter::repeat(*v).take(a.len())).collect();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    (x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

#[test]
fn wasserstein_of_unequal_samples_matches_replication() {
    let a = [0.3, -1.2, 2.5, 0.0, 0.9, -0.4, 1.1];
    let b = [1.0, -0.5, 0.2, 3.3];
    let w = wasserstein2_1d(&a, &b).unwrap();
    assert!((w - replicated_w2(&a, &b)).abs() < 1e-12);
}

#[test]
fn fitter_recovers_a_pure_stretched_exponential() {
    let t: Vec<f64> = (1..=80).map(|i| i as f64 * 0.5).collect();
    let d: Vec<f64> = t.iter().map(|t| 3.0 * (-t.powf(0.45) / 2.0).exp()).collect();
    let f = fit_subexponential_points(&t, &d, (2.0, 40.0)).unwrap();
    assert!((f.gamma_hat - 0.45).abs() < 1e-4);
    assert!((f.c_hat - 2.0).abs() < 1e-3);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-3);
}

#[test]
fn gamma_formula_at_simple_points() {
    // α = 0, ε = 0.05, υ = ∞: 0.9 / 1.9
    assert!((gamma_exponent(0.0, 0.05, f64::INFINITY).unwrap() - 0.9 / 1.9).abs() < 1e-15);
    // α = 0.5, ε = 0.5, υ = 1: 1 / 3
    assert!((gamma_exponent(0.5, 0.5, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(gamma_exponent(0.0, 0.6, 1.0).is_err());
}

#[test]
fn coupling_failures_bound_total_variation() {
    let all = vec![true; 200];
    let tv = tv_from_coupling(&all).unwrap();
    assert_eq!(tv.estimate, 0.0);
    assert!(tv.hi > 0.0 && tv.hi < 0.03);
    let half: Vec<bool> = (0..200).map(|i| i % 2 == 0).collect();
    assert!(tv_from_coupling(&half).unwrap().contains(0.5));
}
