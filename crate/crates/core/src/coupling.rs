//! Synchronous couplings and the stopping-time machinery that controls the
//! memory of the noise along them.

use serde::Serialize;

use crate::conv::Convolver;
use crate::dynamics::{distance, integrate, norm, DriftSpec, Sigma, Trajectory};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::noise::{self, decompose_noise, LagTable, NoisePath, RecordSpec, Synthesizer, WienerRecord, DEFAULT_PAST_TOL};
use crate::rng::{replica_seed, NormalStream};
use crate::stats::{self, Interval};
use crate::par;

/// How the second leg of a coupling starts.
#[derive(Debug, Clone, PartialEq)]
pub enum YStart {
    /// A fixed initial state at time 0.
    At(Vec<f64>),
    /// Started from `x_init` at time `-t_burn` and run with the past of the
    /// shared noise, which realizes an (approximately) stationary pair.
    Stationary { t_burn: f64, x_init: Vec<f64> },
}

/// Two solutions driven by the same noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledTrajectory {
    pub times: Vec<f64>,
    pub x: Trajectory,
    pub y: Trajectory,
    pub gap: Vec<f64>,
    pub noise_seed: u64,
}

impl CoupledTrajectory {
    pub(crate) fn from_legs(x: Trajectory, y: Trajectory) -> Self {
        Self::new(x, y)
    }

    fn new(x: Trajectory, y: Trajectory) -> Self {
        let gap = (0..x.len()).map(|i| distance(x.state(i), y.state(i))).collect();
        Self {
            times: x.times.clone(),
            noise_seed: x.noise_seed,
            x,
            y,
            gap,
        }
    }

    /// Steps on which the gap grows by more than `2 Δt L gap + 1e-12`,
    /// where `L` is the Lipschitz constant of the drift.
    pub fn gap_increases(&self, lipschitz: f64) -> usize {
        (1..self.gap.len())
            .filter(|&i| {
                let dt = self.times[i] - self.times[i - 1];
                let slack = 2.0 * dt * lipschitz * self.gap[i - 1] + 1e-12 * (1.0 + self.gap[i - 1]);
                self.gap[i] - self.gap[i - 1] > slack
            })
            .count()
    }
}

/// A reusable coupling setup: record layout and synthesizer for the window
/// `[-t_burn, T]` on a lattice of step `h`.
pub struct CouplingPlan {
    spec: RecordSpec,
    synth: Synthesizer,
    burn_steps: usize,
}

impl CouplingPlan {
    pub fn new(kernel: &KernelSpec, dim: usize, t_burn: f64, horizon: f64, step: f64) -> Result<Self> {
        let spec = RecordSpec::for_window(kernel, -t_burn, horizon, step, dim, DEFAULT_PAST_TOL)?;
        let layout = WienerRecord::sample(&spec, 0)?;
        let nb = (t_burn / step).round() as i64;
        let nt = (horizon / step).round() as i64;
        let times: Vec<f64> = (-nb..=nt).map(|i| i as f64 * step).collect();
        let synth = Synthesizer::new(kernel, &layout, &times, DEFAULT_PAST_TOL)?;
        Ok(Self {
            spec,
            synth,
            burn_steps: nb as usize,
        })
    }

    pub fn record(&self, seed: u64) -> Result<WienerRecord> {
        WienerRecord::sample(&self.spec, seed)
    }

    /// Noise on `[-t_burn, T]`.
    pub fn noise(&self, seed: u64) -> Result<NoisePath> {
        self.synth.synthesize(&self.record(seed)?)
    }

    /// Runs one coupled pair: `X` from `x0` at time 0; `Y` from `y0` at
    /// time 0 or from `y_init` at `-t_burn`.
    pub fn run(&self, drift: &DriftSpec, sigma: &Sigma, x0: &[f64], y: &YStart, seed: u64) -> Result<CoupledTrajectory> {
        let full = self.noise(seed)?;
        let nb = self.burn_steps;
        let future = NoisePath {
            times: full.times[nb..].to_vec(),
            values: full.values.iter().map(|v| v[nb..].to_vec()).collect(),
            ..full.clone()
        };
        let xt = integrate(drift, sigma, x0, &future, None)?;
        let yt = match y {
            YStart::At(y0) => integrate(drift, sigma, y0, &future, None)?,
            YStart::Stationary { t_burn, x_init } => {
                if (t_burn - nb as f64 * self.spec.step).abs() > 1e-9 {
                    return Err(Error::invalid("burn-in differs from the plan"));
                }
                let whole = integrate(drift, sigma, x_init, &full, None)?;
                let d = whole.dim;
                let rows: Vec<f64> = (nb..whole.len()).flat_map(|i| whole.state(i).to_vec()).collect();
                Trajectory::from_rows(future.times.clone(), d, rows, future.seed)
            }
        };
        Ok(CoupledTrajectory::new(xt, yt))
    }
}

/// Synchronous coupling on `[0, T]` with lattice step `h`.
#[allow(clippy::too_many_arguments)]
pub fn synchronous_couple(
    drift: &DriftSpec,
    sigma: &Sigma,
    x0: &[f64],
    y: &YStart,
    kernel: &KernelSpec,
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<CoupledTrajectory> {
    let t_burn = match y {
        YStart::At(_) => 0.0,
        YStart::Stationary { t_burn, .. } => *t_burn,
    };
    CouplingPlan::new(kernel, drift.dim(), t_burn, horizon, step)?.run(drift, sigma, x0, y, seed)
}

/// Default `ε = min(0.05, (α + 1/2) / 4)`.
pub fn default_epsilon(kernel: &KernelSpec) -> f64 {
    (0.05f64).min((kernel.alpha() + 0.5) / 4.0)
}

/// Stopping times `τ_0 = 0 < τ_1 < ...` with `τ_k = 1 + τ_{k-1} + Δ_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingSchedule {
    pub epsilon: f64,
    pub alpha_eps: f64,
    /// `C_1 / α_ε`.
    pub c1_eps: f64,
    pub step: f64,
    pub taus: Vec<f64>,
    /// `deltas[k - 1] = Δ_k`.
    pub deltas: Vec<f64>,
    /// `s_values[k - 1]`: the weighted sup of the Wiener past seen from
    /// `1 + τ_{k-1}`.
    pub s_values: Vec<f64>,
    /// The weight at the truncation point of that sup, bounding how much the
    /// unrecorded past could change it relative to `|W|` there.
    pub s_truncation_weight: Vec<f64>,
}

impl StoppingSchedule {
    pub fn k_max(&self) -> usize {
        self.deltas.len()
    }

    /// `Δ = 1 ∨ (C_{1,α_ε} S)^{1/α_ε}`, before rounding to the lattice.
    pub fn delta_for(c1_eps: f64, alpha_eps: f64, s: f64) -> f64 {
        (c1_eps * s).powf(1.0 / alpha_eps).max(1.0)
    }
}

fn lattice_ceil(x: f64, h: f64) -> i64 {
    (x / h - 1e-9).ceil() as i64
}

/// Builds `k_max` stopping times from `wiener`, extending its future as
/// needed. `S` is computed over the recorded past, truncated at `-T_past`.
pub fn build_stopping_schedule(
    kernel: &KernelSpec,
    wiener: &mut WienerRecord,
    epsilon: f64,
    k_max: usize,
) -> Result<StoppingSchedule> {
    let a = kernel.alpha() + 0.5;
    crate::error::open_interval("epsilon", epsilon, 0.0, a, "(0, alpha + 1/2)")?;
    let alpha_eps = a - epsilon;
    let c1_eps = kernel.c1() / alpha_eps;
    let h = wiener.step();
    let beta = 0.5 + epsilon;
    let mut tau_idx: Vec<i64> = vec![0];
    let mut deltas = Vec::with_capacity(k_max);
    let mut s_values = Vec::with_capacity(k_max);
    let mut trunc = Vec::with_capacity(k_max);
    let one = (1.0 / h).round() as i64;
    for _ in 0..k_max {
        let theta_idx = one + tau_idx.last().expect("nonempty");
        wiener.extend_to(theta_idx as f64 * h);
        let (s, tw) = past_sup(wiener, theta_idx, beta);
        let delta = StoppingSchedule::delta_for(c1_eps, alpha_eps, s);
        let d_idx = lattice_ceil(delta, h).max(one);
        deltas.push(d_idx as f64 * h);
        s_values.push(s);
        trunc.push(tw);
        tau_idx.push(theta_idx + d_idx);
    }
    wiener.extend_to((tau_idx.last().expect("nonempty") + one) as f64 * h);
    Ok(StoppingSchedule {
        epsilon,
        alpha_eps,
        c1_eps,
        step: h,
        taus: tau_idx.iter().map(|&i| i as f64 * h).collect(),
        deltas,
        s_values,
        s_truncation_weight: trunc,
    })
}

/// `sup_{v >= 0} |W_{θ - v} - W_θ| / (1 + v)^β` over the recorded edges,
/// Euclidean in the components, and the weight at the deepest edge.
fn past_sup(wiener: &WienerRecord, theta_idx: i64, beta: f64) -> (f64, f64) {
    let h = wiener.step();
    let theta = theta_idx as f64 * h;
    let paths: Vec<(Vec<f64>, Vec<f64>)> = (0..wiener.dim()).map(|d| wiener.path(d)).collect();
    let times = &paths[0].0;
    let i_theta = times
        .iter()
        .position(|&t| (t - theta).abs() < 1e-9 * (1.0 + theta.abs()))
        .expect("theta lies on the recorded lattice");
    let mut sup: f64 = 0.0;
    for i in 0..=i_theta {
        let v = theta - times[i];
        let dev: f64 = paths
            .iter()
            .map(|(_, w)| (w[i] - w[i_theta]).powi(2))
            .sum::<f64>()
            .sqrt();
        sup = sup.max(dev / (1.0 + v).powf(beta));
    }
    let deepest = theta - times[0];
    (sup, (1.0 + deepest).powf(-beta))
}

/// Record layout deep enough for a schedule of `k_max` steps on most paths.
pub fn schedule_record_spec(kernel: &KernelSpec, k_max: usize, step: f64, dim: usize) -> Result<RecordSpec> {
    let horizon = 2.0 * (k_max as f64 + 1.0);
    let mut spec = RecordSpec::for_window(kernel, 0.0, 4.0 * horizon, step, dim, DEFAULT_PAST_TOL)?;
    spec.horizon = horizon;
    Ok(spec)
}

/// Per-step sup norms of the memory terms along a schedule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryProfile {
    /// `sup_{[0,1]} |D^{Δ_k}(1 + τ_{k-1})|`: cells before `θ = 1 + τ_{k-1}`.
    pub remote_sup: Vec<f64>,
    /// `sup |D(1 + τ_{k-1}, τ_k)|`: cells in `[θ, τ_k]`.
    pub recent_sup: Vec<f64>,
    /// The recent part split at `τ_k - 1`: cells in `[θ, τ_k - 1]`.
    pub recent_far_sup: Vec<f64>,
    /// Cells in `[τ_k - 1, τ_k]`.
    pub recent_near_sup: Vec<f64>,
}

fn sup_euclid(parts: &[Vec<f64>]) -> f64 {
    (0..parts[0].len())
        .map(|i| parts.iter().map(|p| p[i] * p[i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Evaluates the remote and recent memory terms of `schedule` on `[0, 1]`
/// with `points + 1` equally spaced lattice times.
pub fn memory_profile(
    schedule: &StoppingSchedule,
    kernel: &KernelSpec,
    wiener: &WienerRecord,
    points: usize,
) -> Result<MemoryProfile> {
    let h = schedule.step;
    let cells = (1.0 / h).round() as usize;
    let stride = (cells / points.max(1)).max(1);
    let times: Vec<f64> = (0..=cells).step_by(stride).map(|i| i as f64 * h).collect();
    let mut prof = MemoryProfile {
        remote_sup: Vec::new(),
        recent_sup: Vec::new(),
        recent_far_sup: Vec::new(),
        recent_near_sup: Vec::new(),
    };
    for k in 1..schedule.taus.len() {
        let theta = 1.0 + schedule.taus[k - 1];
        let tau = schedule.taus[k];
        let mut remote = Vec::new();
        let mut recent = Vec::new();
        let mut far = Vec::new();
        let mut near = Vec::new();
        for d in 0..wiener.dim() {
            let a = decompose_noise(kernel, wiener, d, theta, tau, &times)?;
            let b = decompose_noise(kernel, wiener, d, tau - 1.0, tau, &times)?;
            far.push(b.remote.iter().zip(&a.remote).map(|(x, y)| x - y).collect::<Vec<f64>>());
            near.push(b.recent);
            remote.push(a.remote);
            recent.push(a.recent);
        }
        prof.remote_sup.push(sup_euclid(&remote));
        prof.recent_sup.push(sup_euclid(&recent));
        prof.recent_far_sup.push(sup_euclid(&far));
        prof.recent_near_sup.push(sup_euclid(&near));
    }
    Ok(prof)
}

/// Batch summary of the memory conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub cells: usize,
    /// Fraction of `(k, replica)` cells with remote sup at most `1 + slack`.
    pub remote_ok_fraction: f64,
    pub remote_max: f64,
    pub slack: f64,
    /// `K = 2 (median recent-far sup + median recent-near sup)` unless given.
    pub k_threshold: f64,
    /// Fraction of cells with recent sup at most `K`.
    pub eta_hat: Interval,
}

/// Checks the remote bound on every cell and the recent bound at threshold
/// `k_threshold` (calibrated from the medians when `None`).
pub fn check_memory_condition(profiles: &[MemoryProfile], k_threshold: Option<f64>, slack: f64) -> Result<MemoryReport> {
    let remote: Vec<f64> = profiles.iter().flat_map(|p| p.remote_sup.iter().copied()).collect();
    if remote.is_empty() {
        return Err(Error::Empty("memory profiles"));
    }
    let recent: Vec<f64> = profiles.iter().flat_map(|p| p.recent_sup.iter().copied()).collect();
    let k = match k_threshold {
        Some(k) => k,
        None => {
            let far: Vec<f64> = profiles.iter().flat_map(|p| p.recent_far_sup.iter().copied()).collect();
            let near: Vec<f64> = profiles.iter().flat_map(|p| p.recent_near_sup.iter().copied()).collect();
            2.0 * (stats::median(&far) + stats::median(&near))
        }
    };
    let ok = remote.iter().filter(|&&r| r <= 1.0 + slack).count();
    let hits = recent.iter().filter(|&&r| r <= k).count();
    Ok(MemoryReport {
        cells: remote.len(),
        remote_ok_fraction: ok as f64 / remote.len() as f64,
        remote_max: remote.iter().copied().fold(0.0, f64::max),
        slack,
        k_threshold: k,
        eta_hat: stats::wilson(hits, recent.len(), 0.95),
    })
}

/// One row of a tail check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailPoint {
    pub k: usize,
    pub t: f64,
    pub empirical: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub p: f64,
    /// `Ê[(2 + (C_{1,α_ε} S)^{1/α_ε})^p]` over all steps and replicas.
    pub m_hat: f64,
    pub points: Vec<TailPoint>,
    pub holds: bool,
}

/// Compares `P̂(τ_k >= t)` with `M̂_p (k+1)^p t^{-p}` on a log grid of `t`.
pub fn tail_check(schedules: &[StoppingSchedule], p: f64) -> Result<TailCheck> {
    let first = schedules.first().ok_or(Error::Empty("schedules"))?;
    let terms: Vec<f64> = schedules
        .iter()
        .flat_map(|s| {
            s.s_values
                .iter()
                .map(move |&v| (2.0 + (s.c1_eps * v).powf(1.0 / s.alpha_eps)).powf(p))
        })
        .collect();
    let m_hat = stats::mean(&terms);
    let mut points = Vec::new();
    for k in 1..=first.k_max() {
        let taus: Vec<f64> = schedules.iter().map(|s| s.taus[k]).collect();
        for j in 0..=24 {
            let t = 1.0 * 2f64.powf(j as f64 / 3.0);
            let emp = taus.iter().filter(|&&x| x >= t).count() as f64 / taus.len() as f64;
            let bound = m_hat * ((k + 1) as f64).powf(p) * t.powf(-p);
            points.push(TailPoint { k, t, empirical: emp, bound });
        }
    }
    let holds = points.iter().all(|q| q.empirical <= q.bound);
    Ok(TailCheck { p, m_hat, points, holds })
}

/// Outcome of [`contraction_probe`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub p: f64,
    pub k_bound: f64,
    pub rho_hat: f64,
    pub worst_x: Vec<f64>,
    pub worst_y: Vec<f64>,
    pub worst_perturbation: String,
    /// Smallest, over the grid, fraction of runs spending a stretch of
    /// length at least `delta_hat` outside `B(0, R̄)`.
    pub eta_hat: f64,
    pub delta_hat: f64,
    /// `1 - η + η exp(-p κ̄ δ)` for comparison with `rho_hat`.
    pub rho_structural: Option<f64>,
    pub runs: usize,
}

/// A bounded perturbation path `d` on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub label: String,
    /// `values[k][i]`: component `k` at lattice time `i h`.
    pub values: Vec<Vec<f64>>,
}

/// The standard adversarial family: zero, `±K e_1`, a ramp, and remote
/// memory terms sampled from the noise and scaled into the `K` ball.
pub fn perturbation_family(kernel: &KernelSpec, dim: usize, k_bound: f64, step: f64, samples: usize, seed: u64) -> Result<Vec<Perturbation>> {
    let n = (1.0 / step).round() as usize;
    let constant = |c: f64| -> Vec<Vec<f64>> {
        (0..dim)
            .map(|k| vec![if k == 0 { c } else { 0.0 }; n + 1])
            .collect()
    };
    let mut fam = vec![
        Perturbation { label: "zero".into(), values: constant(0.0) },
        Perturbation { label: "+K e1".into(), values: constant(k_bound) },
        Perturbation { label: "-K e1".into(), values: constant(-k_bound) },
        Perturbation {
            label: "ramp".into(),
            values: (0..dim)
                .map(|k| (0..=n).map(|i| if k == 0 { k_bound * i as f64 / n as f64 } else { 0.0 }).collect())
                .collect(),
        },
    ];
    let times = noise::lattice(step, 1.0);
    for j in 0..samples {
        let spec = RecordSpec::for_window(kernel, 0.0, 2.0, step, dim, DEFAULT_PAST_TOL)?;
        let rec = WienerRecord::sample(&spec, replica_seed(seed, "perturbation", j as u64))?;
        let mut comps = Vec::new();
        for d in 0..dim {
            comps.push(decompose_noise(kernel, &rec, d, 0.0, 1.0, &times)?.remote);
        }
        let sup = sup_euclid(&comps);
        if sup > k_bound {
            let f = k_bound / sup;
            comps.iter_mut().for_each(|c| c.iter_mut().for_each(|v| *v *= f));
        }
        fam.push(Perturbation {
            label: format!("remote memory sample {j}"),
            values: comps,
        });
    }
    Ok(fam)
}

/// Innovation paths `σ Z` on `[0, 1]` for `n` independent draws.
fn innovation_draws(kernel: &KernelSpec, dim: usize, step: f64, n: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
    let cells = (1.0 / step).round() as usize;
    let table = LagTable::new(kernel, step, cells);
    let weights: Vec<f64> = (0..cells).map(|m| table.at(m as i64 + 1, 0)).collect();
    let conv = Convolver::new(weights, cells);
    let sq = step.sqrt();
    par::map(n, |j| {
        (0..dim)
            .map(|d| {
                let mut dw = NormalStream::new(replica_seed(seed, "innovation", j as u64), "dw", d as u64).take(0, cells);
                dw.iter_mut().for_each(|x| *x *= sq);
                let mut z = vec![0.0];
                z.extend(conv.apply(&dw, cells));
                z
            })
            .collect()
    })
}

/// Runs `X_t = x + ∫ b(X) + d_t + σ Z_t` on `[0, 1]` (explicit scheme).
fn controlled_run(drift: &DriftSpec, sigma: &Sigma, x: &[f64], d: &Perturbation, z: &[Vec<f64>], step: f64, rbar: f64) -> (Vec<f64>, f64) {
    let dim = x.len();
    let n = z[0].len() - 1;
    let mut state = x.to_vec();
    for (s, v) in state.iter_mut().zip(&d.values) {
        *s += v[0];
    }
    let mut b = vec![0.0; dim];
    let mut run = 0.0f64;
    let mut longest = 0.0f64;
    for i in 0..n {
        drift.eval(&state, &mut b);
        for k in 0..dim {
            let inc = d.values[k][i + 1] - d.values[k][i] + sigma.entries()[k] * (z[k][i + 1] - z[k][i]);
            state[k] += b[k] * step + inc;
        }
        if norm(&state) >= rbar {
            run += step;
            longest = longest.max(run);
        } else {
            run = 0.0;
        }
    }
    (state, longest)
}

/// Estimates `ρ = max Ê|X_1^{x,d} - X_1^{y,d}|^p / |x - y|^p` over a grid of
/// starting pairs and perturbations with `||d||_∞ <= K`, using common
/// innovations across the grid. Fails with the worst witness if `ρ >= 1`.
#[allow(clippy::too_many_arguments)]
pub fn contraction_probe(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    k_bound: f64,
    p: f64,
    pairs: &[(Vec<f64>, Vec<f64>)],
    n: usize,
    step: f64,
    seed: u64,
) -> Result<ContractionReport> {
    if pairs.is_empty() || n == 0 {
        return Err(Error::Empty("contraction grid"));
    }
    if pairs.iter().any(|(x, y)| distance(x, y) == 0.0) {
        return Err(Error::invalid("pairs must have distinct points"));
    }
    let dim = drift.dim();
    let fam = perturbation_family(kernel, dim, k_bound, step, 4, seed)?;
    let z = innovation_draws(kernel, dim, step, n, seed);
    let rbar = drift.rbar.unwrap_or(drift.radius);
    let delta_hat = 0.25;
    let results = par::map(pairs.len() * fam.len(), |idx| {
        let (x, y) = &pairs[idx / fam.len()];
        let d = &fam[idx % fam.len()];
        let dist = distance(x, y).powf(p);
        let mut ratio = 0.0;
        let mut excursions = 0usize;
        for zi in &z {
            let (xe, lx) = controlled_run(drift, sigma, x, d, zi, step, rbar);
            let (ye, _) = controlled_run(drift, sigma, y, d, zi, step, rbar);
            ratio += distance(&xe, &ye).powf(p) / dist;
            if lx >= delta_hat {
                excursions += 1;
            }
        }
        (ratio / n as f64, excursions as f64 / n as f64)
    });
    let (worst, &(rho_hat, _)) = results
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("nonempty");
    let eta_hat = results.iter().map(|r| r.1).fold(1.0, f64::min);
    let (wx, wy) = &pairs[worst / fam.len()];
    let label = fam[worst % fam.len()].label.clone();
    if rho_hat >= 1.0 {
        return Err(Error::NoContraction {
            rho: rho_hat,
            x: wx.clone(),
            y: wy.clone(),
            perturbation: label,
        });
    }
    Ok(ContractionReport {
        p,
        k_bound,
        rho_hat,
        worst_x: wx.clone(),
        worst_y: wy.clone(),
        worst_perturbation: label,
        eta_hat,
        delta_hat,
        rho_structural: drift.kbar.map(|kb| 1.0 - eta_hat + eta_hat * (-p * kb * delta_hat).exp()),
        runs: pairs.len() * fam.len() * n,
    })
}

/// Moments of the gap along the stopping times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepwiseDecay {
    pub p: f64,
    /// `m[k] = Ê|X_{1+τ_k} - Y_{1+τ_k}|^p`, `k = 0..=k_max`.
    pub m: Vec<f64>,
    /// `m[k+1] / m[k]`.
    pub ratios: Vec<f64>,
    /// `exp` of the slope of `log m_k` against `k`.
    pub fitted_ratio: f64,
    pub replicas: usize,
}

/// Runs synchronous pairs from `(x0, y0)` along per-replica schedules.
#[allow(clippy::too_many_arguments)]
pub fn stepwise_decay_probe(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    epsilon: f64,
    k_max: usize,
    p: f64,
    x0: &[f64],
    y0: &[f64],
    n: usize,
    step: f64,
    seed: u64,
) -> Result<StepwiseDecay> {
    let spec = schedule_record_spec(kernel, k_max, step, drift.dim())?;
    let rows = par::try_map(n, |j| -> Result<Vec<f64>> {
        let mut rec = WienerRecord::sample(&spec, replica_seed(seed, "stepwise", j as u64))?;
        let sched = build_stopping_schedule(kernel, &mut rec, epsilon, k_max)?;
        let end = 1.0 + sched.taus[k_max];
        rec.extend_to(end);
        let g = noise::synthesize_noise(kernel, &rec, &noise::lattice(step, end))?;
        let x = integrate(drift, sigma, x0, &g, None)?;
        let y = integrate(drift, sigma, y0, &g, None)?;
        Ok(sched
            .taus
            .iter()
            .map(|t| {
                let i = ((1.0 + t) / step).round() as usize;
                distance(x.state(i), y.state(i)).powf(p)
            })
            .collect())
    })?;
    let m: Vec<f64> = (0..=k_max).map(|k| stats::mean(&rows.iter().map(|r| r[k]).collect::<Vec<_>>())).collect();
    let ratios = m.windows(2).map(|w| w[1] / w[0]).collect();
    let ks: Vec<f64> = (0..=k_max).map(|k| k as f64).collect();
    let logs: Vec<f64> = m.iter().map(|v| v.max(1e-300).ln()).collect();
    let fitted_ratio = if m.iter().all(|&v| v > 0.0) {
        stats::linear_fit(&ks, &logs)?.slope.exp()
    } else {
        0.0
    };
    Ok(StepwiseDecay {
        p,
        m,
        ratios,
        fitted_ratio,
        replicas: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_formula() {
        assert_eq!(StoppingSchedule::delta_for(1.0, 0.5, 0.0), 1.0);
        assert!((StoppingSchedule::delta_for(1.0, 0.5, 2.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_rounding_goes_up() {
        assert_eq!(lattice_ceil(1.0, 0.01), 100);
        assert_eq!(lattice_ceil(1.0001, 0.01), 101);
    }
}
