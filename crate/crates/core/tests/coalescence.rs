use fracergo::coalescence::{
    girsanov_tv_bound, inverse_kernel_transform_fbm, log_density, run_sticking_pair, PsiOperator, Sampling,
};
use fracergo::dynamics::{make_flatbottom_drift, Sigma};
use fracergo::kernels::KernelSpec;
use fracergo::noise::{lattice, synthesize_noise, RecordSpec, WienerRecord, DEFAULT_PAST_TOL};
use fracergo::stats::normal_cdf;

const STEP: f64 = 1e-3;

fn sample_times(sampling: Sampling, cells: usize) -> Vec<f64> {
    let off = if sampling == Sampling::Midpoints { 0.5 } else { 0.0 };
    let n = if sampling == Sampling::Midpoints { cells } else { cells + 1 };
    (0..n).map(|i| (i as f64 + off) * STEP).collect()
}

#[test]
fn constant_and_linear_profiles_have_closed_form_transforms() {
    let cells = 1000;
    let ones = vec![1.0; cells + 1];
    let ramp: Vec<f64> = (0..=cells).map(|i| i as f64 * STEP).collect();
    for h in [0.2, 0.35, 0.65, 0.8] {
        let q = 0.5 - h;
        for sampling in [Sampling::Midpoints, Sampling::Nodes] {
            let t = sample_times(sampling, cells);
            let c = inverse_kernel_transform_fbm(&ones, STEP, h, sampling).unwrap();
            let l = inverse_kernel_transform_fbm(&ramp, STEP, h, sampling).unwrap();
            for (i, &ti) in t.iter().enumerate() {
                if ti == 0.0 {
                    continue;
                }
                let want_c = ti.powf(q);
                let want_l = ti.powf(q + 1.0) / (q + 1.0);
                assert!((c[i] - want_c).abs() <= 1e-9 * want_c.max(1.0), "H={h} t={ti}: {} vs {want_c}", c[i]);
                assert!((l[i] - want_l).abs() <= 1e-9, "H={h} t={ti}: {} vs {want_l}", l[i]);
            }
        }
    }
}

#[test]
fn brownian_transform_is_the_identity() {
    let phi: Vec<f64> = (0..=100).map(|i| (i as f64 * 0.07).cos()).collect();
    let op = PsiOperator::fbm(0.5, 0.01, 100, Sampling::Nodes).unwrap();
    assert_eq!(op.apply(&phi), phi);
}

#[test]
fn free_pair_glues_at_one_quarter() {
    // with b = 0 on the reachable region, |y - x|^β falls linearly from δ^β
    // at rate 4 δ^β, so the pair meets at t = 1/4; it may merge a little
    // earlier once the gap drops below the resolution of the state
    let drift = make_flatbottom_drift(1e3, 1.0, 1).unwrap();
    let sigma = Sigma::scalar(0.7, 1).unwrap();
    let kernel = KernelSpec::fractional(0.4).unwrap();
    let spec = RecordSpec::for_window(&kernel, 0.0, 1.0, STEP, 1, DEFAULT_PAST_TOL).unwrap();
    for (seed, (delta, beta)) in [(0.5, 0.25), (2.0, 0.1), (1e-3, 0.45)].into_iter().enumerate() {
        let rec = WienerRecord::sample(&spec, seed as u64).unwrap();
        let g = synthesize_noise(&kernel, &rec, &lattice(STEP, 1.0)).unwrap();
        let (pair, plan) = run_sticking_pair(&drift, &sigma, &kernel, &[0.0], &[delta], beta, &g).unwrap();
        let tc = plan.coalescence_time.unwrap();
        let analytic_gap = delta * (1.0 - 4.0 * tc).max(0.0).powf(1.0 / beta);
        assert!(tc <= 0.25 + STEP + 1e-9 && analytic_gap < 1e-12, "delta={delta}: {tc}");
        let k = plan.kink.unwrap();
        for i in k..pair.gap.len() {
            assert_eq!(pair.x.state(i), pair.y.state(i));
        }
    }
}

#[test]
fn deterministic_shift_matches_the_gaussian_oracle() {
    // ∫Ψ² = 4 gives TV = 2Φ(1) - 1
    let psi = vec![vec![2.0; 50]];
    let rep = girsanov_tv_bound(&psi, 0.02, 20_000, 3).unwrap();
    let exact = 2.0 * normal_cdf(1.0) - 1.0;
    assert!((rep.l2_psi - 4.0).abs() < 1e-12);
    assert_eq!(rep.oracle.map(|o| (o - exact).abs() < 1e-12), Some(true));
    assert!(rep.tv_plus.contains(exact), "{:?} vs {exact}", rep.tv_plus);
}

#[test]
fn zero_shift_has_unit_density() {
    let psi = vec![vec![0.0; 10]];
    let dw = vec![0.3; 10];
    assert_eq!(log_density(&psi, &[&dw], 0.1), 0.0);
}
