use fracergo::coalescence::{run_sticking_pair, PsiOperator, Sampling};
use fracergo::coupling::{CouplingPlan, YStart};
use fracergo::dynamics::{make_flatbottom_drift, Sigma};
use fracergo::kernels::KernelSpec;
use fracergo::metrics::{fit_subexponential_points, wasserstein2_1d};
use fracergo::noise::{decompose_noise, lattice, synthesize_noise, RecordSpec, WienerRecord, DEFAULT_PAST_TOL};
use fracergo::rng::NormalStream;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stream_windows_are_consistent(seed in any::<u64>(), start in -5000i64..5000, len in 1usize..3000, cut in 0usize..3000) {
        let s = NormalStream::new(seed, "prop", 0);
        let full = s.take(start, len);
        let cut = cut.min(len);
        let tail = s.take(start + cut as i64, len - cut);
        prop_assert_eq!(&full[cut..], &tail[..]);
    }

    #[test]
    fn wasserstein_is_a_symmetric_translation_metric(
        a in prop::collection::vec(-10.0f64..10.0, 1..40),
        b in prop::collection::vec(-10.0f64..10.0, 1..40),
        c in -5.0f64..5.0,
    ) {
        let ab = wasserstein2_1d(&a, &b).unwrap();
        let ba = wasserstein2_1d(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12 * (1.0 + ab));
        prop_assert_eq!(wasserstein2_1d(&a, &a).unwrap(), 0.0);
        let shifted: Vec<f64> = a.iter().map(|v| v + c).collect();
        prop_assert!((wasserstein2_1d(&a, &shifted).unwrap() - c.abs()).abs() < 1e-9);
        // W2 dominates the distance between the means
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        prop_assert!(ab + 1e-9 >= (mean(&a) - mean(&b)).abs());
    }

    #[test]
    fn transform_is_linear(
        h in prop_oneof![0.05f64..0.45, 0.55f64..0.95],
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let cells = 64;
        let p = NormalStream::new(seed, "phi", 0).take(0, cells + 1);
        let q = NormalStream::new(seed, "phi", 1).take(0, cells + 1);
        let mix: Vec<f64> = p.iter().zip(&q).map(|(x, y)| a * x + b * y).collect();
        let op = PsiOperator::fbm(h, 1.0 / cells as f64, cells, Sampling::Midpoints).unwrap();
        let (tp, tq, tm) = (op.apply(&p), op.apply(&q), op.apply(&mix));
        for i in 0..op.len() {
            let want = a * tp[i] + b * tq[i];
            prop_assert!((tm[i] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn synchronous_gap_never_grows_under_a_monotone_drift(
        h in 0.1f64..0.9,
        radius in 0.0f64..3.0,
        kappa in 0.1f64..3.0,
        x0 in -5.0f64..5.0,
        y0 in -5.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let kernel = KernelSpec::fractional(h).unwrap();
        let drift = make_flatbottom_drift(radius, kappa, 1).unwrap();
        let sigma = Sigma::scalar(1.0, 1).unwrap();
        let plan = CouplingPlan::new(&kernel, 1, 0.0, 3.0, 0.01).unwrap();
        let pair = plan.run(&drift, &sigma, &[x0], &YStart::At(vec![y0]), seed).unwrap();
        prop_assert_eq!(pair.gap_increases(drift.lipschitz.unwrap_or(0.0)), 0);
    }

    #[test]
    fn sticking_pair_merges_before_one_half_and_stays_merged(
        h in 0.15f64..0.85,
        delta in 1e-4f64..3.0,
        beta in 0.05f64..0.45,
        x in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let step = 2e-3;
        let kernel = KernelSpec::fractional(h).unwrap();
        let spec = RecordSpec::for_window(&kernel, 0.0, 1.0, step, 1, DEFAULT_PAST_TOL).unwrap();
        let rec = WienerRecord::sample(&spec, seed).unwrap();
        let g = synthesize_noise(&kernel, &rec, &lattice(step, 1.0)).unwrap();
        let drift = make_flatbottom_drift(1.0, 1.0, 1).unwrap();
        let sigma = Sigma::scalar(1.0, 1).unwrap();
        let (pair, plan) = run_sticking_pair(&drift, &sigma, &kernel, &[x], &[x + delta], beta, &g).unwrap();
        prop_assert!(plan.coalescence_time.unwrap() <= 0.5);
        let k = plan.kink.unwrap();
        prop_assert!(pair.gap[k..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fitter_recovers_the_exponent(g0 in 0.1f64..1.0, c in 0.5f64..4.0, a in -2.0f64..2.0) {
        let t: Vec<f64> = (4..=60).map(|i| i as f64 * 0.5).collect();
        let d: Vec<f64> = t.iter().map(|t| (a - t.powf(g0) / c).exp()).collect();
        let f = fit_subexponential_points(&t, &d, (2.0, 30.0)).unwrap();
        prop_assert!((f.gamma_hat - g0).abs() < 1e-3 * g0.max(0.1));
        prop_assert!((f.c_hat / c - 1.0).abs() < 1e-2);
    }

    #[test]
    fn decomposition_parts_add_up(h in 0.1f64..0.9, seed in any::<u64>(), theta in 1.0f64..3.0) {
        let kernel = KernelSpec::fractional(h).unwrap();
        let step = 0.01;
        let theta = (theta / step).round() * step;
        let tau = theta + 1.0;
        let spec = RecordSpec::for_window(&kernel, 0.0, tau + 1.0, step, 1, DEFAULT_PAST_TOL).unwrap();
        let rec = WienerRecord::sample(&spec, seed).unwrap();
        let times = lattice(0.05, 1.0);
        let dec = decompose_noise(&kernel, &rec, 0, theta, tau, &times).unwrap();
        let abs: Vec<f64> = times.iter().map(|t| t + tau).collect();
        let g = synthesize_noise(&kernel, &rec, &abs).unwrap();
        for (i, total) in dec.total().iter().enumerate() {
            let want = g.values[0][i] - g.values[0][0];
            prop_assert!((total - want).abs() < 1e-8 * (1.0 + want.abs()), "{} vs {}", total, want);
        }
    }
}
