use fracergo::kernels::{fractional_variance_constant, KernelSpec};
use fracergo::noise::{
    decompose_noise, exact_fbm_oracle, lattice, required_past, sample_wiener, synthesize_noise, weighted_holder_norm,
    RecordSpec, Synthesizer, WienerRecord, DEFAULT_PAST_TOL,
};
use fracergo::rng::replica_seed;
use fracergo::stats;

fn record_for(kernel: &KernelSpec, horizon: f64, step: f64, seed: u64) -> WienerRecord {
    let spec = RecordSpec::for_window(kernel, 0.0, horizon, step, 1, DEFAULT_PAST_TOL).unwrap();
    WienerRecord::sample(&spec, seed).unwrap()
}

#[test]
fn brownian_kernel_reproduces_the_wiener_path() {
    let k = KernelSpec::fractional(0.5).unwrap();
    let w = sample_wiener(2.0, 1.0, 0.01, 3).unwrap();
    let g = synthesize_noise(&k, &w, &lattice(0.01, 1.0)).unwrap();
    let mut acc = 0.0;
    for (i, dw) in w.future_increments(0).iter().enumerate() {
        acc += dw;
        assert!((g.values[0][i + 1] - acc).abs() < 1e-12);
    }
}

#[test]
fn variance_matches_the_closed_form_constant() {
    for h in [0.3, 0.7] {
        let k = KernelSpec::fractional(h).unwrap();
        let rec = record_for(&k, 1.0, 0.01, 0);
        let synth = Synthesizer::new(&k, &rec, &[0.5, 1.0], DEFAULT_PAST_TOL).unwrap();
        let n = 4000;
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for p in 0..n {
            let r = record_for(&k, 1.0, 0.01, replica_seed(11, "var", p));
            let v = synth.component(&r, 0).unwrap();
            a.push(v[0]);
            b.push(v[1]);
        }
        let c = fractional_variance_constant(h);
        let va = stats::variance(&a);
        let vb = stats::variance(&b);
        assert!((vb / c - 1.0).abs() < 0.1, "H={h}: {vb} vs {c}");
        assert!((va / (c * 0.5f64.powf(2.0 * h)) - 1.0).abs() < 0.1, "H={h}: {va}");
    }
}

#[test]
fn lattice_and_dense_plans_agree() {
    let k = KernelSpec::fractional(0.3).unwrap();
    let rec = record_for(&k, 2.0, 0.01, 8);
    let full = lattice(0.01, 2.0);
    let a = synthesize_noise(&k, &rec, &full).unwrap();
    let few = [0.25, 1.0, 2.0];
    let b = synthesize_noise(&k, &rec, &few).unwrap();
    for (j, t) in few.iter().enumerate() {
        let i = (t / 0.01f64).round() as usize;
        assert!((a.values[0][i] - b.values[0][j]).abs() < 1e-7, "{t}: {} {}", a.values[0][i], b.values[0][j]);
    }
}

#[test]
fn decomposition_adds_up() {
    let k = KernelSpec::fractional(0.3).unwrap();
    let spec = RecordSpec::for_window(&k, -2.0, 6.0, 0.01, 1, DEFAULT_PAST_TOL).unwrap();
    let rec = WienerRecord::sample(&spec, 4).unwrap();
    let times = lattice(0.05, 1.0);
    let dec = decompose_noise(&k, &rec, 0, 1.0, 3.0, &times).unwrap();
    let abs_times: Vec<f64> = std::iter::once(3.0).chain(times.iter().map(|t| t + 3.0)).collect();
    let g = synthesize_noise(&k, &rec, &abs_times).unwrap();
    for (i, tot) in dec.total().iter().enumerate() {
        let direct = g.values[0][i + 1] - g.values[0][0];
        assert!((tot - direct).abs() < 1e-8, "t={}: {tot} vs {direct}", times[i]);
    }
    assert_eq!(dec.remote[0], 0.0);
    assert_eq!(dec.innovation[0], 0.0);
}

#[test]
fn insufficient_past_is_reported() {
    let k = KernelSpec::fractional(0.7).unwrap();
    let w = sample_wiener(3.0, 1.0, 0.01, 1).unwrap();
    let err = synthesize_noise(&k, &w, &[1.0]).unwrap_err();
    match err {
        fracergo::Error::InsufficientPast { needed, .. } => {
            assert_eq!(needed, required_past(&k, 0.0, 1.0, DEFAULT_PAST_TOL).unwrap())
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn exact_fbm_has_the_right_covariance() {
    let h = 0.3;
    let n = 3000;
    let mut ends = Vec::new();
    let mut mids = Vec::new();
    for p in 0..n {
        let path = exact_fbm_oracle(h, 100, 0.01, p).unwrap();
        mids.push(path[50]);
        ends.push(path[100]);
    }
    let v1 = stats::variance(&ends);
    let cov: f64 = ends.iter().zip(&mids).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let expect = 0.5 * (1.0 + 0.5f64.powf(2.0 * h) - 0.5f64.powf(2.0 * h));
    assert!((v1 - 1.0).abs() < 0.08, "{v1}");
    assert!((cov - expect).abs() < 0.06, "{cov} vs {expect}");
}

#[test]
fn holder_norm_flags_divergent_exponents() {
    let s = [0.0, 1.0, 3.0];
    let w = [0.0, 2.0, -4.0];
    let n = weighted_holder_norm(&s, &w, 1.0);
    assert!(n.meaningful);
    assert_eq!(n.value, 1.0);
    assert!(!weighted_holder_norm(&s, &w, 0.5).meaningful);
}

#[test]
fn deep_records_give_consistent_plans() {
    // for H near 1 the record reaches ~1e12 into the past, where a shift of
    // order one is below the resolution of the cell edges
    let k = KernelSpec::fractional(0.83).unwrap();
    let step = 0.01;
    let rec = record_for(&k, 3.55, step, 0);
    assert!(rec.t_past() > 1e11);
    let tau = 2.55;
    let rel: Vec<f64> = lattice(0.05, 1.0);
    let dec = decompose_noise(&k, &rec, 0, 1.55, tau, &rel).unwrap();
    let abs: Vec<f64> = rel.iter().map(|t| t + tau).collect();
    let dense = synthesize_noise(&k, &rec, &abs).unwrap();
    let full = synthesize_noise(&k, &rec, &lattice(step, 3.55)).unwrap();
    let j0 = 255;
    for (i, tot) in dec.total().iter().enumerate() {
        let d = dense.values[0][i] - dense.values[0][0];
        let l = full.values[0][j0 + 5 * i] - full.values[0][j0];
        assert!((tot - d).abs() < 1e-10, "{tot} vs {d}");
        assert!((tot - l).abs() < 1e-7, "{tot} vs {l}");
    }
}
