//! Coalescent coupling: a drift added to one leg that merges the two paths
//! before time 1/2, the Wiener-level shift `Ψ` that realizes it, and the
//! Girsanov price of that shift.
//!
//! On each step the pair is advanced by splitting: first the Euler drift
//! step of both legs, then the exact flow of the control
//! `ρ' = -2ϖσ ρ / |ρ|^β`, under which `|ρ|^β` decreases linearly and hits
//! zero in finite time. The noise enters both legs identically, so it
//! cancels in `ρ = y - x`, and once `ρ` is zero the second leg is set to
//! the first one bit for bit.
//!
//! `Ψ` is computed from the piecewise linear interpolant of the nodal
//! drift values by product integration: on every cell the kernel is
//! integrated exactly against the linear interpolant, which turns the
//! transform into convolutions with precomputed lag weights. Values are
//! produced at cell midpoints, which are also the points used in the
//! stochastic integral of the Girsanov density; the midpoint value on cell
//! `n` depends on `φ_{n+1}`, itself a function of the state at step `n`,
//! so the integrand stays adapted.

use std::sync::Arc;

use serde::Serialize;

use crate::conv::Convolver;
use crate::coupling::{CoupledTrajectory, CouplingPlan, YStart};
use crate::dynamics::{distance, norm, DriftSpec, Sigma, Trajectory};
use crate::error::{Error, Result};
use crate::kernels::{Family, KernelSpec};
use crate::noise::{self, NoisePath, RecordSpec, Synthesizer, WienerRecord, DEFAULT_PAST_TOL};
use crate::quad::{self, power_integral};
use crate::rng::{replica_seed, NormalStream};
use crate::stats::{self, Interval};
use crate::par;

/// Default exponent of the sticking drift.
pub const DEFAULT_BETA: f64 = 0.25;

/// The sticking drift along one coupled run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StickingPlan {
    pub beta: f64,
    /// `ϖ = 2 |x - y|^β / (σ β)`.
    pub varpi: f64,
    pub sigma: f64,
    pub initial_gap: f64,
    pub step: f64,
    /// Node times, starting at the start of the run.
    pub times: Vec<f64>,
    /// `phi[k][n]`: component `k` of `φ = -2ϖ ρ / |ρ|^β` at node `n`.
    pub phi: Vec<Vec<f64>>,
    /// Derivative of `φ` along the pair; one-sided at the kink.
    pub phi_prime: Vec<Vec<f64>>,
    /// `applied[k][n]`: average control actually applied on step `n`.
    pub applied: Vec<Vec<f64>>,
    /// First node at which the paths coincide.
    pub kink: Option<usize>,
    pub coalescence_time: Option<f64>,
    /// `Ψ` at the midpoints of the cells of `[t_0, t_0 + 1]`, when the
    /// kernel has a known conjugate.
    pub psi: Option<Vec<Vec<f64>>>,
    /// `(t, Ψ(t))` after time 1, same condition.
    pub psi_tail: Option<Vec<(f64, Vec<f64>)>>,
}

impl StickingPlan {
    /// `sup_n |φ_n|`.
    pub fn phi_sup(&self) -> f64 {
        (0..self.times.len())
            .map(|n| self.phi.iter().map(|c| c[n] * c[n]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn phi_prime_sup(&self) -> f64 {
        (0..self.times.len())
            .map(|n| self.phi_prime.iter().map(|c| c[n] * c[n]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// `∫_0^1 |Ψ|^2` by the midpoint rule.
    pub fn psi_l2(&self) -> Option<f64> {
        self.psi
            .as_ref()
            .map(|p| p.iter().flat_map(|c| c.iter()).map(|v| v * v).sum::<f64>() * self.step)
    }

    /// CSV with header `t,gap,phi_1,...,phi_d`.
    pub fn to_csv(&self, gap: &[f64]) -> String {
        let mut s = String::from("t,gap");
        for k in 1..=self.phi.len() {
            s.push_str(&format!(",phi_{k}"));
        }
        s.push('\n');
        for n in 0..self.times.len() {
            s.push_str(&format!("{},{}", self.times[n], gap[n]));
            for c in &self.phi {
                s.push_str(&format!(",{}", c[n]));
            }
            s.push('\n');
        }
        s
    }
}

fn check_beta(beta: f64) -> Result<()> {
    crate::error::open_interval("beta", beta, 0.0, 0.5, "(0, 1/2)")
}

/// Integrates the controlled pair on the grid of `noise`, from `x` and `y`
/// at the first grid time. `σ` must be a multiple of the identity.
#[allow(clippy::too_many_arguments)]
pub fn run_sticking_pair(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    x: &[f64],
    y: &[f64],
    beta: f64,
    noise: &NoisePath,
) -> Result<(CoupledTrajectory, StickingPlan)> {
    let (pair, mut plan) = stick(drift, sigma, x, y, beta, noise)?;
    if let Family::Fractional { h } = kernel.family() {
        let h = *h;
        let cells = (1.0 / plan.step).round() as usize;
        if plan.times.len() > cells {
            let op = PsiOperator::fbm(h, plan.step, cells, Sampling::Midpoints)?;
            plan.psi = Some(plan.phi.iter().map(|c| op.apply(&c[..=cells])).collect());
            let tail_times: Vec<f64> = (1..=16).map(|i| 1.0 + 0.25 * i as f64).collect();
            let mut tails: Vec<Vec<f64>> = Vec::new();
            for c in &plan.phi {
                tails.push(tail_transform_fbm(&c[..=cells], plan.step, h, &tail_times)?.values);
            }
            plan.psi_tail = Some(
                tail_times
                    .iter()
                    .enumerate()
                    .map(|(i, &t)| (t, tails.iter().map(|c| c[i]).collect()))
                    .collect(),
            );
        }
    }
    Ok((pair, plan))
}

fn stick(drift: &DriftSpec, sigma: &Sigma, x: &[f64], y: &[f64], beta: f64, noise: &NoisePath) -> Result<(CoupledTrajectory, StickingPlan)> {
    check_beta(beta)?;
    let s = sigma
        .as_scalar()
        .ok_or_else(|| Error::invalid("the sticking drift needs sigma to be a multiple of the identity"))?;
    let dim = drift.dim();
    if x.len() != dim || y.len() != dim || noise.dim() != dim || sigma.dim() != dim {
        return Err(Error::invalid("dimension mismatch"));
    }
    let times = &noise.times;
    let n = times.len();
    if n < 2 {
        return Err(Error::Empty("noise grid"));
    }
    let h = times[1] - times[0];
    let delta = distance(x, y);
    let varpi = if delta > 0.0 { 2.0 * delta.powf(beta) / (s * beta) } else { 0.0 };
    let shrink = 2.0 * beta * varpi * s * h;

    let mut xs = Vec::with_capacity(n * dim);
    let mut ys = Vec::with_capacity(n * dim);
    let mut phi = vec![Vec::with_capacity(n); dim];
    let mut phi_prime = vec![Vec::with_capacity(n); dim];
    let mut applied = vec![Vec::with_capacity(n); dim];
    let mut xc = x.to_vec();
    let mut rho: Vec<f64> = (0..dim).map(|k| y[k] - x[k]).collect();
    let mut yc: Vec<f64> = if delta > 0.0 { y.to_vec() } else { x.to_vec() };
    let mut bx = vec![0.0; dim];
    let mut by = vec![0.0; dim];
    let mut kink = if delta == 0.0 { Some(0) } else { None };
    let mut prev_phi = vec![0.0; dim];

    let record_node = |i: usize,
                       xc: &[f64],
                       yc: &[f64],
                       rho: &[f64],
                       kink: &mut Option<usize>,
                       prev_phi: &mut Vec<f64>,
                       phi: &mut Vec<Vec<f64>>,
                       phi_prime: &mut Vec<Vec<f64>>,
                       bx: &mut Vec<f64>,
                       by: &mut Vec<f64>| {
        let r = norm(rho);
        drift.eval(xc, bx);
        drift.eval(yc, by);
        if r > 0.0 {
            let rb = r.powf(-beta);
            let cur: Vec<f64> = rho.iter().map(|v| -2.0 * varpi * v * rb).collect();
            // ρ' = b(y) - b(x) + σ φ
            let dr: Vec<f64> = (0..dim).map(|k| by[k] - bx[k] + s * cur[k]).collect();
            let inner: f64 = (0..dim).map(|k| rho[k] * dr[k]).sum();
            for k in 0..dim {
                let d = -2.0 * varpi * (rb * dr[k] - beta * r.powf(-beta - 2.0) * inner * rho[k]);
                phi[k].push(cur[k]);
                phi_prime[k].push(d);
            }
            *prev_phi = cur;
        } else {
            let first = kink.is_none();
            if first {
                *kink = Some(i);
            }
            for k in 0..dim {
                phi[k].push(0.0);
                let d = if first && i > 0 { -prev_phi[k] / h } else { 0.0 };
                phi_prime[k].push(d);
            }
            prev_phi.iter_mut().for_each(|v| *v = 0.0);
        }
    };

    xs.extend_from_slice(&xc);
    ys.extend_from_slice(&yc);
    record_node(0, &xc, &yc, &rho, &mut kink, &mut prev_phi, &mut phi, &mut phi_prime, &mut bx, &mut by);
    for i in 0..n - 1 {
        // drift step of both legs (b evaluated by record_node)
        let mut rho_star = vec![0.0; dim];
        for k in 0..dim {
            rho_star[k] = (yc[k] + h * by[k]) - (xc[k] + h * bx[k]);
        }
        for k in 0..dim {
            xc[k] += h * bx[k] + s * (noise.values[k][i + 1] - noise.values[k][i]);
        }
        // exact control flow
        let r = norm(&rho_star);
        let factor = if r > 0.0 {
            let left = r.powf(beta) - shrink;
            if left > 0.0 {
                left.powf(1.0 / beta) / r
            } else {
                0.0
            }
        } else {
            0.0
        };
        for k in 0..dim {
            let next = rho_star[k] * factor;
            applied[k].push((next - rho_star[k]) / (s * h));
            rho[k] = next;
        }
        if rho.iter().all(|&v| v == 0.0) {
            yc.copy_from_slice(&xc);
        } else {
            for k in 0..dim {
                yc[k] = xc[k] + rho[k];
            }
        }
        if xc.iter().chain(yc.iter()).any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: times[i + 1] });
        }
        xs.extend_from_slice(&xc);
        ys.extend_from_slice(&yc);
        record_node(i + 1, &xc, &yc, &rho, &mut kink, &mut prev_phi, &mut phi, &mut phi_prime, &mut bx, &mut by);
    }
    let coalescence_time = kink.map(|k| times[k] - times[0]);
    let limit = 0.5 + 10.0 * h;
    let span = times[n - 1] - times[0];
    if span >= limit && coalescence_time.map_or(true, |t| t > limit) {
        let i = ((limit / h).floor() as usize).min(n - 1);
        let gap = distance(&xs[i * dim..(i + 1) * dim], &ys[i * dim..(i + 1) * dim]);
        return Err(Error::NoCoalescence { time: times[0] + limit, gap });
    }
    let xt = Trajectory::from_rows(times.clone(), dim, xs, noise.seed);
    let yt = Trajectory::from_rows(times.clone(), dim, ys, noise.seed);
    let pair = CoupledTrajectory::from_legs(xt, yt);
    let plan = StickingPlan {
        beta,
        varpi,
        sigma: s,
        initial_gap: delta,
        step: h,
        times: times.iter().map(|t| t - times[0]).collect(),
        phi,
        phi_prime,
        applied,
        kink,
        coalescence_time,
        psi: None,
        psi_tail: None,
    };
    Ok((pair, plan))
}

/// Where a transform is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// At the nodes `n h`, `n = 0..=N`.
    Nodes,
    /// At the cell midpoints `(n + 1/2) h`, `n = 0..N`.
    Midpoints,
}

impl Sampling {
    fn offset(self) -> f64 {
        match self {
            Sampling::Nodes => 0.0,
            Sampling::Midpoints => 0.5,
        }
    }

    fn len(self, cells: usize) -> usize {
        match self {
            Sampling::Nodes => cells + 1,
            Sampling::Midpoints => cells,
        }
    }
}

/// Which formula a user-supplied conjugate kernel is used with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `Ψ(t) = -∫_0^t h'(s - t) φ(s) ds`; needs `h(0-) = 0` and `h'`
    /// integrable at 0.
    C3i,
    /// `Ψ(t) = h(-t) φ(0) + ∫_0^t h(s - t) φ'(s) ds`; needs `h` square
    /// integrable at 0.
    C3ii,
}

/// A conjugate kernel `h` on `(-∞, 0)` with its derivative.
#[derive(Clone)]
pub struct Conjugate {
    pub h: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub h_prime: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl Conjugate {
    pub fn new<F, G>(h: F, h_prime: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            h: Arc::new(h),
            h_prime: Arc::new(h_prime),
        }
    }

    /// `h(t) = (-t)^{1/2 - H}`.
    pub fn fractional(hurst: f64) -> Self {
        let q = 0.5 - hurst;
        Self::new(move |t: f64| (-t).powf(q), move |t: f64| -q * (-t).powf(q - 1.0))
    }
}

/// Exact integrals of a kernel `k(u)` over one lag cell `[lo, hi]`:
/// `(∫ k, ∫ k (hi - u) / h)`.
type CellMoments<'a> = dyn Fn(f64, f64) -> Result<(f64, f64)> + 'a;

fn power_moments(c: f64, q: f64, lo: f64, hi: f64, h: f64) -> (f64, f64) {
    let p0 = power_integral(q, lo, hi);
    let p1 = power_integral(q + 1.0, lo, hi);
    (c * p0, c * (hi * p0 - p1) / h)
}

/// Fits `c u^q` to `k` on the cell and integrates the fit.
fn fitted_moments(k: &dyn Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> Result<(f64, f64)> {
    let (u1, u2) = if lo == 0.0 {
        (0.25 * hi, 0.5 * hi)
    } else {
        (lo + 0.25 * (hi - lo), lo + 0.75 * (hi - lo))
    };
    let (f1, f2) = (k(u1), k(u2));
    if f1 == 0.0 && f2 == 0.0 {
        return Ok((0.0, 0.0));
    }
    match quad::fit_power(u1, f1, u2, f2) {
        Some((c, q)) if q > -1.0 || lo > 0.0 => Ok(power_moments(c, q, lo, hi, h)),
        _ if lo > 0.0 => {
            // sign change inside the cell: Gauss-Legendre on a smooth integrand
            let (x, w) = quad::gauss_legendre(8);
            let (mut a, mut b) = (0.0, 0.0);
            for (xi, wi) in x.iter().zip(&w) {
                let u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xi;
                let v = k(u) * 0.5 * (hi - lo) * wi;
                a += v;
                b += v * (hi - u) / h;
            }
            Ok((a, b))
        }
        _ => Err(Error::invalid("kernel is not integrable at the origin")),
    }
}

enum Form {
    /// `Ψ = Σ_m W0_m φ_{n-m} + W1_m φ_{n+1-m}`.
    Values { w0: Convolver, w1: Convolver, last: Vec<f64> },
    /// `Ψ = k0(t) φ_0 + Σ_m C_m φ'_{n-m}` with cell slopes `φ'`.
    Slopes { c: Convolver, k0: Vec<f64> },
    Identity,
}

/// A precomputed map from nodal values of `φ` on `N` cells of width `h` to
/// samples of `Ψ`.
pub struct PsiOperator {
    form: Form,
    cells: usize,
    step: f64,
    sampling: Sampling,
}

impl PsiOperator {
    fn build(form_kind: u8, moments: &CellMoments<'_>, k0: Option<&dyn Fn(f64) -> f64>, step: f64, cells: usize, sampling: Sampling) -> Result<Self> {
        let theta = sampling.offset();
        let m0 = if sampling == Sampling::Nodes { 1 } else { 0 };
        let mut a = vec![0.0; cells + 2];
        let mut b = vec![0.0; cells + 2];
        for m in m0..=cells {
            let lo = ((m as f64 - 1.0 + theta) * step).max(0.0);
            let hi = (m as f64 + theta) * step;
            let (p0, p1) = moments(lo, hi)?;
            a[m] = p0 - p1;
            b[m] = p1;
        }
        let form = if form_kind == 0 {
            Form::Values {
                w0: Convolver::new(a, cells + 2),
                w1: Convolver::new(b.clone(), cells + 2),
                last: b,
            }
        } else {
            let k0 = k0.expect("slope form needs k0");
            let k0v = (0..sampling.len(cells))
                .map(|n| {
                    let t = (n as f64 + theta) * step;
                    if t == 0.0 {
                        f64::INFINITY
                    } else {
                        k0(t)
                    }
                })
                .collect();
            // the full cell integrals: a + b
            let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            Form::Slopes {
                c: Convolver::new(c, cells + 2),
                k0: k0v,
            }
        };
        Ok(Self {
            form,
            cells,
            step,
            sampling,
        })
    }

    /// The fractional transform with `c_H = 1`.
    pub fn fbm(hurst: f64, step: f64, cells: usize, sampling: Sampling) -> Result<Self> {
        crate::error::open_interval("H", hurst, 0.0, 1.0, "(0, 1)")?;
        if hurst == 0.5 {
            return Ok(Self {
                form: Form::Identity,
                cells,
                step,
                sampling,
            });
        }
        if hurst < 0.5 {
            let c = 0.5 - hurst;
            let q = -0.5 - hurst;
            Self::build(0, &|lo, hi| Ok(power_moments(c, q, lo, hi, step)), None, step, cells, sampling)
        } else {
            let q = 0.5 - hurst;
            Self::build(
                1,
                &|lo, hi| Ok(power_moments(1.0, q, lo, hi, step)),
                Some(&|t: f64| t.powf(q)),
                step,
                cells,
                sampling,
            )
        }
    }

    /// The transform through a conjugate kernel, after checking the
    /// regime's conditions at the origin.
    pub fn general(conj: &Conjugate, regime: Regime, step: f64, cells: usize, sampling: Sampling) -> Result<Self> {
        let h = conj.h.clone();
        let hp = conj.h_prime.clone();
        match regime {
            Regime::C3i => {
                let vanishes = match quad::fit_power(1e-9, h(-1e-9), 2e-9, h(-2e-9)) {
                    Some((_, q)) => q > 0.0,
                    None => h(-1e-9) == 0.0,
                };
                if !vanishes {
                    return Err(Error::invalid(format!("h(0-) is not zero (h(-1e-9) = {:e})", h(-1e-9))));
                }
                let k = move |u: f64| -hp(-u);
                check_exponent(&k, -1.0, "h' is not integrable at 0")?;
                Self::build(0, &|lo, hi| fitted_moments(&k, lo, hi, step), None, step, cells, sampling)
            }
            Regime::C3ii => {
                let k = move |u: f64| h(-u);
                check_exponent(&k, -0.5, "h is not square integrable at 0")?;
                Self::build(1, &|lo, hi| fitted_moments(&k, lo, hi, step), Some(&|t: f64| k(t)), step, cells, sampling)
            }
        }
    }

    pub fn len(&self) -> usize {
        self.sampling.len(self.cells)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.len())
            .map(|n| (n as f64 + self.sampling.offset()) * self.step)
            .collect()
    }

    /// `Ψ` from the `N + 1` nodal values of `φ`.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        assert_eq!(phi.len(), self.cells + 1, "phi must have one value per node");
        let n_out = self.len();
        match &self.form {
            Form::Identity => match self.sampling {
                Sampling::Nodes => phi.to_vec(),
                Sampling::Midpoints => phi.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect(),
            },
            Form::Values { w0, w1, last } => {
                let a = w0.apply(phi, self.cells + 2);
                let b = w1.apply(phi, self.cells + 2);
                // the convolution at n + 1 also picks up lag n + 1, which has no cell
                (0..n_out).map(|n| a[n] + b[n + 1] - last[n + 1] * phi[0]).collect()
            }
            Form::Slopes { c, k0 } => {
                let slopes: Vec<f64> = phi.windows(2).map(|w| (w[1] - w[0]) / self.step).collect();
                let s = c.apply(&slopes, self.cells + 2);
                (0..n_out)
                    .map(|n| {
                        let head = if phi[0] == 0.0 { 0.0 } else { k0[n] * phi[0] };
                        head + s[n]
                    })
                    .collect()
            }
        }
    }
}

fn check_exponent(k: &dyn Fn(f64) -> f64, floor: f64, msg: &str) -> Result<()> {
    let (u1, u2) = (1e-9, 2e-9);
    match quad::fit_power(u1, k(u1), u2, k(u2)) {
        Some((_, q)) if q <= floor => Err(Error::invalid(format!("{msg} (local exponent {q:.3})"))),
        _ => Ok(()),
    }
}

/// `Ψ` for the fractional kernel from nodal `φ` on `[0, N h]`.
pub fn inverse_kernel_transform_fbm(phi: &[f64], step: f64, hurst: f64, sampling: Sampling) -> Result<Vec<f64>> {
    if phi.is_empty() {
        return Err(Error::Empty("phi"));
    }
    Ok(PsiOperator::fbm(hurst, step, phi.len() - 1, sampling)?.apply(phi))
}

/// `Ψ` through a conjugate kernel from nodal `φ` on `[0, N h]`.
pub fn inverse_kernel_transform_general(phi: &[f64], step: f64, conj: &Conjugate, regime: Regime, sampling: Sampling) -> Result<Vec<f64>> {
    if phi.is_empty() {
        return Err(Error::Empty("phi"));
    }
    Ok(PsiOperator::general(conj, regime, step, phi.len() - 1, sampling)?.apply(phi))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailTransform {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Whether `|Ψ(t)| <= ||φ||_∞ (t - 1/2)^{-H-1/2} / 2` held everywhere.
    pub within_bound: bool,
}

/// `Ψ(t) = ∫_0^{1/2} (t - s)^{-H-1/2} φ(s) ds` for `t > 1`, with `φ` given
/// at the nodes `n h` of `[0, 1]` and required to vanish after `1/2`.
pub fn tail_transform_fbm(phi: &[f64], step: f64, hurst: f64, times: &[f64]) -> Result<TailTransform> {
    crate::error::open_interval("H", hurst, 0.0, 1.0, "(0, 1)")?;
    let sup = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * sup.max(1e-300);
    if let Some((i, v)) = phi.iter().enumerate().find(|(i, v)| *i as f64 * step > 0.5 + 1e-9 && v.abs() > tol) {
        return Err(Error::invalid(format!(
            "phi = {v:e} at t = {} after 1/2: the paths have not coalesced",
            i as f64 * step
        )));
    }
    if let Some(&t) = times.iter().find(|&&t| t <= 1.0) {
        return Err(Error::invalid(format!("tail times must exceed 1, got {t}")));
    }
    let q = -hurst - 0.5;
    let half = (0.5 / step).round() as usize;
    let mut values = Vec::with_capacity(times.len());
    let mut ok = true;
    for &t in times {
        let mut acc = 0.0;
        for j in 0..half.min(phi.len() - 1) {
            let hi = t - j as f64 * step;
            let lo = hi - step;
            let (p0, p1) = power_moments(1.0, q, lo, hi, step);
            acc += (p0 - p1) * phi[j] + p1 * phi[j + 1];
        }
        ok &= acc.abs() <= 0.5 * sup * (t - 0.5).powf(q) * (1.0 + 1e-9) + 1e-300;
        values.push(acc);
    }
    Ok(TailTransform {
        times: times.to_vec(),
        values,
        within_bound: ok,
    })
}

/// Monte Carlo summary of a Girsanov density `D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GirsanovReport {
    /// Mean of `∫_0^1 |Ψ|^2`.
    pub l2_psi: f64,
    /// `Ê|D - 1|`.
    pub tv_bound: Interval,
    /// The bound on the total variation distance, `E(D - 1)_+ = E|D - 1| / 2`,
    /// estimated as `Ê(1 - D)_+`. The two agree because `E D = 1`; the
    /// second form is bounded by 1 and has far smaller variance.
    pub tv_plus: Interval,
    pub e_d: Interval,
    pub e_d2: f64,
    /// `1 - Ê(D - 1)_+`.
    pub success_prob: f64,
    /// `2Φ(L/2) - 1` with `L^2 = ∫|Ψ|^2`, for a deterministic `Ψ`.
    pub oracle: Option<f64>,
    pub draws: usize,
    /// Set when `Ê[D^2]` exceeds `1e6`; the bound is then reported as 1.
    pub trivial: bool,
}

/// Threshold on `Ê[D^2]` beyond which the estimate is not trusted.
pub const DENSITY_VARIANCE_LIMIT: f64 = 1e6;

fn summarize(densities: &[f64], l2: f64, oracle: Option<f64>) -> GirsanovReport {
    let abs: Vec<f64> = densities.iter().map(|d| (d - 1.0).abs()).collect();
    let plus: Vec<f64> = densities.iter().map(|d| (1.0 - d).max(0.0)).collect();
    let e_d2 = stats::mean(&densities.iter().map(|d| d * d).collect::<Vec<_>>());
    let trivial = !(e_d2 <= DENSITY_VARIANCE_LIMIT);
    if trivial {
        log::warn!("Girsanov density second moment {e_d2:e} is too large; reporting the trivial bound");
    }
    let mut tv_plus = stats::mean_ci(&plus, 0.95);
    let mut tv_bound = stats::mean_ci(&abs, 0.95);
    if trivial {
        tv_plus = Interval { estimate: 1.0, lo: 0.0, hi: 1.0 };
        tv_bound = Interval { estimate: 2.0, lo: 0.0, hi: 2.0 };
    }
    GirsanovReport {
        l2_psi: l2,
        success_prob: 1.0 - tv_plus.estimate,
        tv_bound,
        tv_plus,
        e_d: stats::mean_ci(densities, 0.95),
        e_d2,
        oracle,
        draws: densities.len(),
        trivial,
    }
}

/// `log D = Σ_n Ψ_n Δw_n - ½ Σ_n Ψ_n^2 h` over all components.
pub fn log_density(psi: &[Vec<f64>], dw: &[&[f64]], step: f64) -> f64 {
    psi.iter()
        .zip(dw)
        .map(|(p, w)| p.iter().zip(w.iter()).map(|(a, b)| a * b - 0.5 * a * a * step).sum::<f64>())
        .sum()
}

/// Girsanov bound for a frozen `Ψ` (one vector per component, sampled at
/// cell midpoints of width `step`), with fresh Wiener increments per draw.
pub fn girsanov_tv_bound(psi: &[Vec<f64>], step: f64, n_mc: usize, seed: u64) -> Result<GirsanovReport> {
    if n_mc == 0 {
        return Err(Error::Empty("n_mc"));
    }
    let l2: f64 = psi.iter().flat_map(|c| c.iter()).map(|v| v * v).sum::<f64>() * step;
    let sq = step.sqrt();
    let cells = psi.first().map_or(0, |c| c.len());
    let densities = par::map(n_mc, |j| {
        let w: Vec<Vec<f64>> = (0..psi.len())
            .map(|k| {
                let mut v = NormalStream::new(replica_seed(seed, "girsanov", j as u64), "dw", k as u64).take(0, cells);
                v.iter_mut().for_each(|x| *x *= sq);
                v
            })
            .collect();
        let refs: Vec<&[f64]> = w.iter().map(|v| v.as_slice()).collect();
        log_density(psi, &refs, step).exp()
    });
    let oracle = Some(2.0 * stats::normal_cdf(0.5 * l2.sqrt()) - 1.0);
    Ok(summarize(&densities, l2, oracle))
}

/// Girsanov bound with `Ψ` recomputed from the sticking drift of every
/// draw: fresh noise, sticking pair on `[0, 1]` from `(x, y)`, fractional
/// transform, density from the record's increments.
#[allow(clippy::too_many_arguments)]
pub fn sticking_girsanov(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    x: &[f64],
    y: &[f64],
    beta: f64,
    step: f64,
    n_mc: usize,
    seed: u64,
) -> Result<GirsanovReport> {
    let hurst = kernel
        .hurst()
        .ok_or_else(|| Error::invalid("adapted Girsanov pipeline needs a fractional kernel"))?;
    let cells = (1.0 / step).round() as usize;
    let spec = RecordSpec::for_window(kernel, 0.0, 1.0, step, drift.dim(), DEFAULT_PAST_TOL)?;
    let layout = WienerRecord::sample(&spec, 0)?;
    let synth = Synthesizer::new(kernel, &layout, &noise::lattice(step, 1.0), DEFAULT_PAST_TOL)?;
    let op = PsiOperator::fbm(hurst, step, cells, Sampling::Midpoints)?;
    let draws = par::try_map(n_mc, |j| -> Result<(f64, f64)> {
        let rec = WienerRecord::sample(&spec, replica_seed(seed, "sticking-girsanov", j as u64))?;
        let g = synth.synthesize(&rec)?;
        let (_, plan) = stick(drift, sigma, x, y, beta, &g)?;
        let psi: Vec<Vec<f64>> = plan.phi.iter().map(|c| op.apply(c)).collect();
        let dw: Vec<&[f64]> = (0..drift.dim()).map(|k| &rec.future_increments(k)[..cells]).collect();
        let l2 = psi.iter().flat_map(|c| c.iter()).map(|v| v * v).sum::<f64>() * step;
        Ok((log_density(&psi, &dw, step).exp(), l2))
    })?;
    let dens: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let l2 = stats::mean(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
    Ok(summarize(&dens, l2, None))
}

/// Rate exponent of the Girsanov cost: 1 for `H <= 1/2`, 1/2 above.
pub fn girsanov_exponent(hurst: f64) -> f64 {
    if hurst <= 0.5 {
        1.0
    } else {
        0.5
    }
}

/// Outcome of [`two_stage_tv_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageEstimate {
    pub t: f64,
    pub epsilon: f64,
    /// `P̂(gap_{t-1} > ε)`.
    pub far_fraction: f64,
    /// `Ê[1{gap <= ε} (D - 1)_+]`.
    pub girsanov_term: f64,
    pub estimate: Interval,
    /// `min(1, Ê gap) + Ê[1{gap <= 1} (D - 1)_+]`: the split at `ε = 1`
    /// with the Markov inequality for the first term.
    pub markov_bound: f64,
    pub mean_gap: f64,
    /// Fraction of replicas whose sticking attempt failed to merge.
    pub sticking_failures: usize,
    pub replicas: usize,
}

/// Threshold `ε = d^{2/(2+κ)}` balancing the Markov term `d / ε` against the
/// Girsanov term `ε^{κ/2}`, where `d` is the expected gap.
pub fn two_stage_threshold(expected_gap: f64, kappa: f64) -> f64 {
    expected_gap.powf(2.0 / (2.0 + kappa)).min(1.0)
}

/// Estimates `P(X_t != Y_t)` for a synchronous coupling up to `t - 1`
/// followed by a sticking attempt on `[t - 1, t]` when the gap is below `ε`.
/// `Y` starts from the stationary warm start. When `expected_gap` is
/// `None` the threshold uses the empirical mean gap at `t - 1`.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_tv_estimate(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    x0: &[f64],
    t_burn: f64,
    t: f64,
    expected_gap: Option<f64>,
    beta: f64,
    step: f64,
    n: usize,
    seed: u64,
) -> Result<TwoStageEstimate> {
    if t < 1.0 {
        return Err(Error::Domain { name: "t", value: t, range: "[1, inf)" });
    }
    let hurst = kernel
        .hurst()
        .ok_or_else(|| Error::invalid("two-stage estimate needs a fractional kernel"))?;
    let kappa = girsanov_exponent(hurst);
    let plan = CouplingPlan::new(kernel, drift.dim(), t_burn, t, step)?;
    let cells = (1.0 / step).round() as usize;
    let op = PsiOperator::fbm(hurst, step, cells, Sampling::Midpoints)?;
    let start = ((t - 1.0) / step).round() as usize;
    let y_init = vec![0.0; drift.dim()];
    // per replica: gap at t - 1 and the (D - 1)_+ of a sticking attempt
    let runs = par::try_map(n, |j| -> Result<(f64, f64, bool)> {
        let s = replica_seed(seed, "two-stage", j as u64);
        let rec = plan.record(s)?;
        let pair = plan.run(drift, sigma, x0, &YStart::Stationary { t_burn, x_init: y_init.clone() }, s)?;
        let gap = pair.gap[start];
        let full = plan.noise(s)?;
        let nb = (t_burn / step).round() as usize;
        let window = NoisePath {
            times: full.times[nb + start..].to_vec(),
            values: full.values.iter().map(|v| v[nb + start..].to_vec()).collect(),
            ..full.clone()
        };
        let res = stick(drift, sigma, pair.x.state(start), pair.y.state(start), beta, &window);
        let (plus, failed) = match res {
            Ok((_, sp)) => {
                let psi: Vec<Vec<f64>> = sp.phi.iter().map(|c| op.apply(&c[..=cells])).collect();
                let dw: Vec<&[f64]> = (0..drift.dim())
                    .map(|k| &rec.future_increments(k)[start..start + cells])
                    .collect();
                ((log_density(&psi, &dw, step).exp() - 1.0).max(0.0), false)
            }
            Err(Error::NoCoalescence { .. }) => (1.0, true),
            Err(e) => return Err(e),
        };
        Ok((gap, plus, failed))
    })?;
    let gaps: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mean_gap = stats::mean(&gaps);
    let epsilon = two_stage_threshold(expected_gap.unwrap_or(mean_gap), kappa);
    let per: Vec<f64> = runs
        .iter()
        .map(|&(g, p, _)| if g > epsilon { 1.0 } else { p.min(1.0) })
        .collect();
    let far = gaps.iter().filter(|&&g| g > epsilon).count() as f64 / n as f64;
    let girsanov_term = runs
        .iter()
        .map(|&(g, p, _)| if g <= epsilon { p.min(1.0) } else { 0.0 })
        .sum::<f64>()
        / n as f64;
    let markov_girsanov = runs
        .iter()
        .map(|&(g, p, _)| if g <= 1.0 { p.min(1.0) } else { 0.0 })
        .sum::<f64>()
        / n as f64;
    Ok(TwoStageEstimate {
        t,
        epsilon,
        far_fraction: far,
        girsanov_term,
        estimate: stats::mean_ci(&per, 0.95),
        markov_bound: mean_gap.min(1.0) + markov_girsanov,
        mean_gap,
        sticking_failures: runs.iter().filter(|r| r.2).count(),
        replicas: n,
    })
}
