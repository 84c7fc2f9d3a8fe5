use fracergo::coupling::{build_stopping_schedule, default_epsilon, schedule_record_spec, CouplingPlan, YStart};
use fracergo::dynamics::{make_linear_drift, Sigma};
use fracergo::kernels::KernelSpec;
use fracergo::noise::WienerRecord;

#[test]
fn synchronous_linear_pair_contracts_deterministically() {
    let kernel = KernelSpec::fractional(0.7).unwrap();
    let step = 0.01;
    let plan = CouplingPlan::new(&kernel, 1, 0.0, 4.0, step).unwrap();
    let drift = make_linear_drift(0.8, 1).unwrap();
    let sigma = Sigma::scalar(1.3, 1).unwrap();
    let pair = plan.run(&drift, &sigma, &[1.0], &YStart::At(vec![-2.0]), 4).unwrap();
    for (n, gap) in pair.gap.iter().enumerate() {
        let want = 3.0 * (1.0 - 0.8 * step).powi(n as i32);
        assert!((gap - want).abs() < 1e-10 * 3.0, "step {n}: {gap} vs {want}");
    }
}

#[test]
fn schedules_are_lattice_aligned_and_increasing() {
    for h in [0.3, 0.5, 0.8] {
        let kernel = KernelSpec::fractional(h).unwrap();
        let step = 0.01;
        let spec = schedule_record_spec(&kernel, 5, step, 1).unwrap();
        for seed in 0..20 {
            let mut rec = WienerRecord::sample(&spec, seed).unwrap();
            let s = build_stopping_schedule(&kernel, &mut rec, default_epsilon(&kernel), 5).unwrap();
            assert_eq!(s.taus[0], 0.0);
            for k in 1..=5 {
                let d = s.deltas[k - 1];
                assert!(d >= 1.0 - 1e-12);
                assert!(((d / step) - (d / step).round()).abs() < 1e-6);
                assert!((s.taus[k] - s.taus[k - 1] - 1.0 - d).abs() < 1e-9);
            }
            if h == 0.5 {
                // no memory: every gap is the minimal one
                assert!(s.deltas.iter().all(|&d| (d - 1.0).abs() < 1e-12));
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_pairs() {
    let kernel = KernelSpec::fractional(0.3).unwrap();
    let plan = CouplingPlan::new(&kernel, 2, 2.0, 3.0, 0.01).unwrap();
    let drift = make_linear_drift(1.0, 2).unwrap();
    let sigma = Sigma::diagonal(vec![1.0, 0.5]).unwrap();
    let y = YStart::Stationary { t_burn: 2.0, x_init: vec![0.0, 0.0] };
    let a = plan.run(&drift, &sigma, &[1.0, 1.0], &y, 9).unwrap();
    let b = plan.run(&drift, &sigma, &[1.0, 1.0], &y, 9).unwrap();
    assert_eq!(a, b);
}
