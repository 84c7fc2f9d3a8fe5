//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process fails if any criterion fails. Set `ACCEPTANCE_ONLY=3,7` to
//! run a subset.

use std::time::Instant;

use fracergo::coalescence::{
    girsanov_tv_bound, inverse_kernel_transform_fbm, inverse_kernel_transform_general, run_sticking_pair,
    sticking_girsanov, Conjugate, Regime, Sampling,
};
use fracergo::coupling::{
    build_stopping_schedule, check_memory_condition, contraction_probe, default_epsilon, memory_profile,
    schedule_record_spec, stepwise_decay_probe, tail_check, CouplingPlan, YStart,
};
use fracergo::dynamics::{certify, make_double_well_drift, make_flatbottom_drift, verify_c1, Sigma};
use fracergo::kernels::{laplace_conjugate_check, normalized_fractional_conjugate, KernelSpec};
use fracergo::metrics::{decay_curve, exponential_rate, fit_subexponential_points, gamma_bootstrap, X0Law};
use fracergo::noise::{exact_fbm_oracle, lattice, synthesize_noise, RecordSpec, Synthesizer, WienerRecord, DEFAULT_PAST_TOL};
use fracergo::rng::replica_seed;
use fracergo::stats::{self, ks_two_sample, linear_fit, log_log_slope};
use fracergo::Error;

type Outcome = Result<(bool, String), Error>;
type Criterion = (&'static str, fn() -> Outcome);

/// Master seed, overridable through `ACCEPTANCE_SEED` to check that a
/// result does not hinge on one particular draw.
fn master() -> u64 {
    std::env::var("ACCEPTANCE_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(1)
}

fn noise_fidelity() -> Outcome {
    let grid = [0.2, 0.4, 0.6, 0.8, 1.0];
    let n = 10_000;
    let step = 0.005;
    let mut ok = true;
    let mut notes = Vec::new();
    for (hi, h) in [0.3, 0.5, 0.7].into_iter().enumerate() {
        let kernel = KernelSpec::fractional(h)?;
        let spec = RecordSpec::for_window(&kernel, 0.0, 1.0, step, 1, DEFAULT_PAST_TOL)?;
        let synth = Synthesizer::new(&kernel, &WienerRecord::sample(&spec, 0)?, &grid, DEFAULT_PAST_TOL)?;
        let mut syn = Vec::with_capacity(n);
        let mut ex = Vec::with_capacity(n);
        for p in 0..n as u64 {
            let rec = WienerRecord::sample(&spec, replica_seed(master(), "fidelity-ma", p + 100_000 * hi as u64))?;
            syn.push(synth.component(&rec, 0)?);
            let path = exact_fbm_oracle(h, 5, 0.2, replica_seed(master(), "fidelity-exact", p + 100_000 * hi as u64))?;
            ex.push(path[1..].to_vec());
        }
        let normalize = |rows: &mut Vec<Vec<f64>>| {
            let last: Vec<f64> = rows.iter().map(|r| r[4]).collect();
            let sd = (last.iter().map(|v| v * v).sum::<f64>() / last.len() as f64).sqrt();
            rows.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v /= sd));
        };
        normalize(&mut syn);
        normalize(&mut ex);
        let cs = stats::covariance_matrix(&syn);
        let ce = stats::covariance_matrix(&ex);
        let mut worst: f64 = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                worst = worst.max((cs[i][j] - ce[i][j]).abs());
            }
        }
        let mut pmin: f64 = 1.0;
        for col in [1, 4] {
            let a: Vec<f64> = syn.iter().map(|r| r[col]).collect();
            let b: Vec<f64> = ex.iter().map(|r| r[col]).collect();
            pmin = pmin.min(ks_two_sample(&a, &b)?.p_value);
        }
        ok &= worst <= 0.05 && pmin > 0.01;
        notes.push(format!("H={h}: max cov diff {worst:.4}, min KS p {pmin:.3}"));
    }
    Ok((ok, notes.join("; ")))
}

fn gap_monotonicity() -> Outcome {
    let drift = make_flatbottom_drift(1.0, 1.0, 1)?;
    let sigma = Sigma::scalar(1.0, 1)?;
    let mut increases = 0;
    let mut total = 0;
    for h in [0.3, 0.5, 0.7] {
        let kernel = KernelSpec::fractional(h)?;
        let plan = CouplingPlan::new(&kernel, 1, 0.0, 10.0, 0.01)?;
        let counts = replicas(1000, |j| -> Result<usize, Error> {
            let x0 = [(j % 7) as f64 - 3.0];
            let y0 = YStart::At(vec![2.5 - (j % 5) as f64]);
            let pair = plan.run(&drift, &sigma, &x0, &y0, replica_seed(2, "monotone", j as u64 + (h * 1e6) as u64))?;
            Ok(pair.gap_increases(drift.lipschitz.unwrap_or(0.0)))
        })?;
        increases += counts.iter().sum::<usize>();
        total += counts.len();
    }
    Ok((increases == 0, format!("{increases} increases over {total} replicas (H = 0.3, 0.5, 0.7)")))
}

fn replicas<T, F: Fn(usize) -> Result<T, Error>>(n: usize, f: F) -> Result<Vec<T>, Error> {
    (0..n).map(f).collect()
}

fn contractive_anchor() -> Outcome {
    let drift = make_flatbottom_drift(0.0, 1.0, 1)?;
    let sigma = Sigma::scalar(1.0, 1)?;
    let kernel = KernelSpec::fractional(0.3)?;
    let t: Vec<f64> = (1..=50).map(|i| i as f64 * 0.1).collect();
    let curve = decay_curve(&drift, &sigma, &kernel, &X0Law::Point(vec![2.0]), &t, 20.0, 0.01, 200, 3)?;
    let fit = exponential_rate(&curve, (0.5, 5.0))?;
    Ok(((fit.slope - 2.0).abs() <= 0.1, format!("rate {:.4} (R^2 {:.6})", fit.slope, fit.r2)))
}

fn coalescence() -> Outcome {
    let drift = make_flatbottom_drift(1.0, 1.0, 1)?;
    let sigma = Sigma::scalar(1.0, 1)?;
    let kernel = KernelSpec::fractional(0.3)?;
    let step = 1e-3;
    let spec = RecordSpec::for_window(&kernel, 0.0, 1.0, step, 1, DEFAULT_PAST_TOL)?;
    let mut worst: f64 = 0.0;
    let mut latest: f64 = 0.0;
    let mut runs = 0;
    for (i, delta) in [1e-3, 1e-2, 1e-1, 1.0].into_iter().enumerate() {
        for (j, beta) in [0.125, 0.25, 0.375].into_iter().enumerate() {
            let rec = WienerRecord::sample(&spec, replica_seed(4, "coalesce", (3 * i + j) as u64))?;
            let g = synthesize_noise(&kernel, &rec, &lattice(step, 1.0))?;
            let (pair, plan) = run_sticking_pair(&drift, &sigma, &kernel, &[0.3], &[0.3 + delta], beta, &g)?;
            for (t, gap) in pair.times.iter().zip(&pair.gap) {
                if *t >= 0.5 - 1e-12 {
                    worst = worst.max(*gap);
                }
            }
            latest = latest.max(plan.coalescence_time.unwrap_or(f64::INFINITY));
            runs += 1;
        }
    }
    Ok((
        worst <= 1e-6,
        format!("{runs} runs, max gap on [1/2, 1] = {worst:e}, latest coalescence at t = {latest:.3}"),
    ))
}

fn scaling_exponents() -> Outcome {
    let drift = make_flatbottom_drift(1.0, 1.0, 1)?;
    let sigma = Sigma::scalar(1.0, 1)?;
    let deltas = [0.01, 0.03, 0.1, 0.3];
    let step = 1e-3;
    let mut ok = true;
    let mut notes = Vec::new();
    for h in [0.3, 0.7] {
        let kernel = KernelSpec::fractional(h)?;
        let kappa = if h < 0.5 { 1.0 } else { 0.5 };
        let spec = RecordSpec::for_window(&kernel, 0.0, 1.0, step, 1, DEFAULT_PAST_TOL)?;
        let mut phi_sup = Vec::new();
        let mut l2 = Vec::new();
        let mut tv = Vec::new();
        for (i, &d) in deltas.iter().enumerate() {
            let rec = WienerRecord::sample(&spec, replica_seed(5, "phi", i as u64))?;
            let g = synthesize_noise(&kernel, &rec, &lattice(step, 1.0))?;
            let (_, plan) = run_sticking_pair(&drift, &sigma, &kernel, &[0.0], &[d], 0.25, &g)?;
            phi_sup.push(plan.phi_sup());
            let rep = sticking_girsanov(&drift, &sigma, &kernel, &[0.0], &[d], 0.25, step, 2000, replica_seed(5, "tv", i as u64))?;
            l2.push(rep.l2_psi);
            tv.push(rep.tv_plus.estimate);
        }
        let s_phi = log_log_slope(&deltas, &phi_sup)?.slope;
        let s_l2 = log_log_slope(&deltas, &l2)?.slope;
        let s_tv = log_log_slope(&deltas, &tv)?.slope;
        let l2_floor = if h < 0.5 { 0.9 } else { 0.45 };
        ok &= (s_phi - 1.0).abs() <= 0.05 && s_l2 >= l2_floor && s_tv >= kappa / 2.0 - 0.1;
        notes.push(format!("H={h}: phi {s_phi:.3}, int psi^2 {s_l2:.3} (>= {l2_floor}), TV {s_tv:.3} (>= {:.2})", kappa / 2.0 - 0.1));
    }
    Ok((ok, notes.join("; ")))
}

fn girsanov_oracle() -> Outcome {
    let step = 0.01;
    let psi = vec![vec![1.0; 100]];
    let rep = girsanov_tv_bound(&psi, step, 100_000, 6)?;
    let exact = 2.0 * stats::normal_cdf(0.5) - 1.0;
    let half_abs = stats::Interval {
        estimate: 0.5 * rep.tv_bound.estimate,
        lo: 0.5 * rep.tv_bound.lo,
        hi: 0.5 * rep.tv_bound.hi,
    };
    let ok = rep.tv_plus.contains(exact);
    Ok((
        ok,
        format!(
            "TV bound {:.4} [{:.4}, {:.4}], raw E|D-1|/2 = {:.4}, exact {exact:.4}, E D = {:.4}",
            rep.tv_plus.estimate, rep.tv_plus.lo, rep.tv_plus.hi, half_abs.estimate, rep.e_d.estimate
        ),
    ))
}

fn schedule_properties() -> Outcome {
    let kernel = KernelSpec::fractional(0.3)?;
    let eps = default_epsilon(&kernel);
    let k_max = 6;
    let n = 500;
    let step = 0.01;
    let spec = schedule_record_spec(&kernel, k_max, step, 1)?;
    let mut schedules = Vec::new();
    let mut profiles = Vec::new();
    for j in 0..n {
        let mut rec = WienerRecord::sample(&spec, replica_seed(7, "schedule", j))?;
        let s = build_stopping_schedule(&kernel, &mut rec, eps, k_max)?;
        profiles.push(memory_profile(&s, &kernel, &rec, 50)?);
        schedules.push(s);
    }
    let mem = check_memory_condition(&profiles, None, 0.0)?;
    let ks: Vec<f64> = (1..=k_max).map(|k| k as f64).collect();
    let means: Vec<f64> = (1..=k_max)
        .map(|k| stats::mean(&schedules.iter().map(|s| s.taus[k]).collect::<Vec<_>>()))
        .collect();
    let lin = linear_fit(&ks, &means)?;
    let t1 = tail_check(&schedules, 1.0)?;
    let t2 = tail_check(&schedules, 2.0)?;
    let ok = mem.remote_ok_fraction >= 0.99 && lin.r2 > 0.99 && t1.holds && t2.holds;
    Ok((
        ok,
        format!(
            "remote <= 1 in {:.2}% of {} cells (max {:.3}); E tau_k R^2 {:.5}; tail p=1 {}, p=2 {}; eta_hat {:.3} at K {:.3}",
            100.0 * mem.remote_ok_fraction,
            mem.cells,
            mem.remote_max,
            lin.r2,
            t1.holds,
            t2.holds,
            mem.eta_hat.estimate,
            mem.k_threshold
        ),
    ))
}

fn contraction() -> Outcome {
    let mut drift = make_flatbottom_drift(1.0, 1.0, 1)?;
    certify(&mut drift, 4000, 6.0, 8)?;
    let sigma = Sigma::scalar(1.0, 1)?;
    let kernel = KernelSpec::fractional(0.5)?;
    let pts = [-3.0, -1.5, -0.5, 0.0, 0.5, 1.5, 3.0];
    let mut pairs = Vec::new();
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            pairs.push((vec![a], vec![b]));
        }
    }
    let probe = contraction_probe(&drift, &sigma, &kernel, 3.0, 2.0, &pairs, 200, 0.01, 8)?;
    let k03 = KernelSpec::fractional(0.3)?;
    let steps = stepwise_decay_probe(&drift, &sigma, &k03, default_epsilon(&k03), 6, 2.0, &[3.0], &[-3.0], 2000, 0.01, 8)?;
    let ok = probe.rho_hat < 1.0 && steps.fitted_ratio < 1.0;
    Ok((
        ok,
        format!(
            "rho_hat {:.4} (worst {:?} vs {:?}, {}), eta_hat {:.3}; m_k ratio {:.4}, m = {:?}",
            probe.rho_hat,
            probe.worst_x,
            probe.worst_y,
            probe.worst_perturbation,
            probe.eta_hat,
            steps.fitted_ratio,
            steps.m.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>()
        ),
    ))
}

fn rate_ordering() -> Outcome {
    let drift = make_flatbottom_drift(1.0, 1.0, 1)?;
    let sigma = Sigma::scalar(1.0, 1)?;
    let t: Vec<f64> = (1..=60).map(|i| i as f64 * 0.5).collect();
    let mut cis = Vec::new();
    let mut notes = Vec::new();
    for h in [0.3, 0.5, 0.7] {
        let kernel = KernelSpec::fractional(h)?;
        let curve = decay_curve(&drift, &sigma, &kernel, &X0Law::Point(vec![4.0]), &t, 50.0, 0.01, 2000, 9)?;
        let window = curve.auto_window();
        let ci = gamma_bootstrap(&curve, window, 200, 9)?;
        notes.push(format!("H={h}: gamma {:.3} [{:.3}, {:.3}] on {window:?}", ci.estimate, ci.lo, ci.hi));
        cis.push(ci);
    }
    let ordered = cis.windows(2).all(|w| w[0].estimate >= w[1].estimate || w[0].overlaps(&w[1]));
    let tt: Vec<f64> = (4..=60).map(|i| i as f64 * 0.5).collect();
    let mut self_ok = true;
    for g0 in [0.3, 0.5, 0.8] {
        let d: Vec<f64> = tt.iter().map(|x: &f64| (-x.powf(g0) / 1.5).exp()).collect();
        let f = fit_subexponential_points(&tt, &d, (2.0, 30.0))?;
        self_ok &= (f.gamma_hat / g0 - 1.0).abs() <= 0.02 && (f.c_hat / 1.5 - 1.0).abs() <= 0.02;
    }
    notes.push(format!("self-test {}", if self_ok { "recovered" } else { "missed" }));
    Ok((ordered && self_ok, notes.join("; ")))
}

fn conjugate_equivalence() -> Outcome {
    let step = 1e-3;
    let phi: Vec<f64> = (0..=1000)
        .map(|i| {
            let t = i as f64 * step;
            (3.0 * t).sin() + t * t + 0.5
        })
        .collect();
    let mut worst: f64 = 0.0;
    for h in [0.2, 0.3, 0.4] {
        let closed = inverse_kernel_transform_fbm(&phi, step, h, Sampling::Midpoints)?;
        let general = inverse_kernel_transform_general(&phi, step, &Conjugate::fractional(h), Regime::C3ii, Sampling::Midpoints)?;
        let c3i = inverse_kernel_transform_general(&phi, step, &Conjugate::fractional(h), Regime::C3i, Sampling::Midpoints)?;
        for i in 0..closed.len() {
            worst = worst.max((closed[i] - general[i]).abs()).max((closed[i] - c3i[i]).abs());
        }
    }
    let p_grid: Vec<f64> = (0..=20).map(|i| 0.1 * 100f64.powf(i as f64 / 20.0)).collect();
    let mut lap: f64 = 0.0;
    for h in [0.3, 0.7] {
        let kernel = KernelSpec::fractional(h)?;
        let conj = normalized_fractional_conjugate(h);
        lap = lap.max(laplace_conjugate_check(&kernel, &conj, &p_grid)?.max_error);
    }
    Ok((worst < 1e-4 && lap < 1e-3, format!("transform sup error {worst:.2e}, Laplace error {lap:.2e}")))
}

fn negative_control() -> Outcome {
    let dw = make_double_well_drift(1)?;
    match verify_c1(&dw, 2000, 2.0, 11) {
        Err(Error::NotMonotone { x, y, inner }) => Ok((inner > 0.0, format!("rejected with witness x = {x:?}, y = {y:?}, inner product {inner:.4}"))),
        Err(e) => Ok((false, format!("unexpected error {e}"))),
        Ok(_) => Ok((false, "double well was certified".into())),
    }
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [Criterion; 11] = [
        ("noise fidelity", noise_fidelity),
        ("gap monotonicity", gap_monotonicity),
        ("contractive anchor", contractive_anchor),
        ("coalescence", coalescence),
        ("scaling exponents", scaling_exponents),
        ("girsanov oracle", girsanov_oracle),
        ("schedule properties", schedule_properties),
        ("contraction", contraction),
        ("rate ordering", rate_ordering),
        ("conjugate equivalence", conjugate_equivalence),
        ("negative control", negative_control),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name:<22} {} ({:.1}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
