//! Drift fields, their monotonicity certificates, and the explicit Euler
//! solution map `dX = b(X) dt + σ dG`.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StandardUniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::noise::{self, NoisePath, RecordSpec, Synthesizer, WienerRecord, DEFAULT_PAST_TOL};
use crate::rng::{generator, replica_seed};
use crate::{par, stats};

type DriftFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
enum DriftKind {
    FlatBottom,
    Linear,
    DoubleWell,
    Custom(DriftFn),
}

/// Drift selection as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftChoice {
    #[serde(alias = "flat-bottom")]
    Flatbottom {
        #[serde(rename = "R")]
        radius: f64,
        kappa: f64,
    },
    Linear { kappa: f64 },
    DoubleWell,
}

/// Which parts of the semi-contractivity assumption a drift satisfies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct C1Flags {
    /// Monotone: `<x - y, b(x) - b(y)> <= 0`.
    pub monotone: bool,
    /// Strictly contractive outside a ball.
    pub contractive_outside: bool,
    /// Polynomial growth.
    pub polynomial_growth: bool,
}

/// A drift `b: R^d -> R^d` with its structural constants.
#[derive(Clone)]
pub struct DriftSpec {
    kind: DriftKind,
    dim: usize,
    pub kappa: f64,
    pub radius: f64,
    pub growth_n: u32,
    /// Lipschitz constant if known, used for the integrator slack.
    pub lipschitz: Option<f64>,
    pub certified: C1Flags,
    pub rbar: Option<f64>,
    pub kbar: Option<f64>,
}

impl fmt::Debug for DriftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftSpec")
            .field("kind", &self.name())
            .field("dim", &self.dim)
            .field("kappa", &self.kappa)
            .field("radius", &self.radius)
            .field("growth_n", &self.growth_n)
            .field("certified", &self.certified)
            .field("rbar", &self.rbar)
            .field("kbar", &self.kbar)
            .finish()
    }
}

/// `b(x) = -κ (|x| - R)_+ x / |x|`, the negative gradient of
/// `U(x) = κ (|x| - R)_+^2 / 2`.
pub fn make_flatbottom_drift(radius: f64, kappa: f64, dim: usize) -> Result<DriftSpec> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::Domain { name: "R", value: radius, range: "[0, inf)" });
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::Domain { name: "kappa", value: kappa, range: "(0, inf)" });
    }
    check_dim(dim)?;
    Ok(DriftSpec {
        kind: if radius == 0.0 { DriftKind::Linear } else { DriftKind::FlatBottom },
        dim,
        kappa,
        radius,
        growth_n: 1,
        lipschitz: Some(kappa),
        certified: C1Flags {
            monotone: true,
            contractive_outside: true,
            polynomial_growth: true,
        },
        rbar: None,
        kbar: None,
    })
}

/// `b(x) = -κ x`.
pub fn make_linear_drift(kappa: f64, dim: usize) -> Result<DriftSpec> {
    make_flatbottom_drift(0.0, kappa, dim)
}

/// `b(x) = x - x^3` componentwise; not monotone, kept as a negative control.
pub fn make_double_well_drift(dim: usize) -> Result<DriftSpec> {
    check_dim(dim)?;
    Ok(DriftSpec {
        kind: DriftKind::DoubleWell,
        dim,
        kappa: 1.0,
        radius: 1.0,
        growth_n: 3,
        lipschitz: None,
        certified: C1Flags::default(),
        rbar: None,
        kbar: None,
    })
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 {
        Err(Error::invalid("dimension must be positive"))
    } else {
        Ok(())
    }
}

impl DriftSpec {
    /// A user drift; nothing is certified until [`verify_c1`] says so.
    pub fn custom<F>(dim: usize, kappa: f64, radius: f64, growth_n: u32, b: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        check_dim(dim)?;
        Ok(Self {
            kind: DriftKind::Custom(Arc::new(b)),
            dim,
            kappa,
            radius,
            growth_n,
            lipschitz: None,
            certified: C1Flags::default(),
            rbar: None,
            kbar: None,
        })
    }

    pub fn from_choice(choice: &DriftChoice, dim: usize) -> Result<Self> {
        match *choice {
            DriftChoice::Flatbottom { radius, kappa } => make_flatbottom_drift(radius, kappa, dim),
            DriftChoice::Linear { kappa } => make_linear_drift(kappa, dim),
            DriftChoice::DoubleWell => make_double_well_drift(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DriftKind::FlatBottom => "flatbottom",
            DriftKind::Linear => "linear",
            DriftKind::DoubleWell => "double-well",
            DriftKind::Custom(_) => "custom",
        }
    }

    /// Writes `b(x)` into `out`.
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match &self.kind {
            DriftKind::Linear => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = -self.kappa * xi;
                }
            }
            DriftKind::FlatBottom => {
                let r = norm(x);
                let excess = r - self.radius;
                if excess <= 0.0 {
                    out.iter_mut().for_each(|o| *o = 0.0);
                } else {
                    let f = -self.kappa * excess / r;
                    for (o, xi) in out.iter_mut().zip(x) {
                        *o = f * xi;
                    }
                }
            }
            DriftKind::DoubleWell => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = xi - xi * xi * xi;
                }
            }
            DriftKind::Custom(b) => b(x, out),
        }
    }

    pub fn at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval(x, &mut out);
        out
    }
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Positive diagonal diffusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sigma(Vec<f64>);

impl Sigma {
    pub fn diagonal(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("sigma"));
        }
        if let Some(&bad) = entries.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Domain { name: "sigma", value: bad, range: "(0, inf)" });
        }
        Ok(Self(entries))
    }

    pub fn scalar(s: f64, dim: usize) -> Result<Self> {
        Self::diagonal(vec![s; dim.max(1)])
    }

    pub fn entries(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// The common value when all entries agree.
    pub fn as_scalar(&self) -> Option<f64> {
        let s = self.0[0];
        self.0.iter().all(|&v| v == s).then_some(s)
    }
}

impl TryFrom<Vec<f64>> for Sigma {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::diagonal(v)
    }
}

impl From<Sigma> for Vec<f64> {
    fn from(s: Sigma) -> Self {
        s.0
    }
}

/// Outcome of [`verify_c1`] for a drift that passed the monotonicity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C1Certificate {
    pub pairs: usize,
    /// Largest observed `<x - y, b(x) - b(y)>`, normalized by `|x - y|^2`.
    pub max_inner: f64,
    /// Smallest `R̄ >= R` on the test grid with `κ̄(R̄) >= κ / 4`.
    pub rbar: Option<f64>,
    pub kbar: Option<f64>,
    /// Fitted `C` in `|b(x)| <= C (1 + |x|^N)`.
    pub growth_constant: f64,
    pub flags: C1Flags,
}

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    StandardUniform.sample(rng)
}

fn sample_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&v).max(1e-300);
    let r = radius * uniform(rng).powf(1.0 / dim as f64);
    v.iter_mut().for_each(|x| *x *= r / n);
    v
}

/// Checks monotonicity of `b` on sampled pairs in `B(0, radius)` and
/// estimates the constants `(R̄, κ̄)` of strict contraction outside a ball.
///
/// Pairs are drawn uniformly in the ball, plus stratified pairs with `x`
/// on spheres of growing radius and `y` close to `x` or on the opposite side.
/// In one dimension a full product grid is used instead.
pub fn verify_c1(drift: &DriftSpec, n_pairs: usize, radius: f64, seed: u64) -> Result<C1Certificate> {
    if !(radius > 0.0) {
        return Err(Error::Domain { name: "radius", value: radius, range: "(0, inf)" });
    }
    let d = drift.dim;
    let mut rng = generator(replica_seed(seed, "verify-c1", 0));
    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    if d == 1 {
        let m = (n_pairs as f64).sqrt().ceil().max(41.0) as usize;
        let grid: Vec<f64> = (0..m).map(|i| -radius + 2.0 * radius * i as f64 / (m - 1) as f64).collect();
        for &x in &grid {
            for &y in &grid {
                if x != y {
                    pairs.push((vec![x], vec![y]));
                }
            }
        }
    } else {
        for _ in 0..n_pairs {
            pairs.push((sample_ball(&mut rng, d, radius), sample_ball(&mut rng, d, radius)));
        }
        let shells = 24;
        for j in 1..=shells {
            let r = radius * j as f64 / shells as f64;
            for _ in 0..(n_pairs / shells).max(8) {
                let mut x = sample_ball(&mut rng, d, 1.0);
                let n = norm(&x).max(1e-300);
                x.iter_mut().for_each(|v| *v *= r / n);
                let near: Vec<f64> = x.iter().map(|v| v + 0.05 * radius * (uniform(&mut rng) - 0.5)).collect();
                let opposite: Vec<f64> = x.iter().map(|v| -v * uniform(&mut rng)).collect();
                pairs.push((x.clone(), near));
                pairs.push((x, opposite));
            }
        }
    }
    let tol = 1e-10;
    let mut worst = (f64::NEG_INFINITY, 0usize, 0.0);
    let mut scores = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        let bx = drift.at(x);
        let by = drift.at(y);
        let inner: f64 = (0..d).map(|k| (x[k] - y[k]) * (bx[k] - by[k])).sum();
        let dist2: f64 = (0..d).map(|k| (x[k] - y[k]).powi(2)).sum();
        if dist2 == 0.0 {
            continue;
        }
        let ratio = inner / dist2;
        scores.push((norm(x), ratio));
        if ratio > worst.0 {
            worst = (ratio, i, inner);
        }
    }
    if worst.0 > tol {
        let (x, y) = pairs[worst.1].clone();
        return Err(Error::NotMonotone { x, y, inner: worst.2 });
    }
    // Smallest grid radius beyond which every sampled pair contracts at
    // rate at least κ/4.
    let target = drift.kappa / 4.0;
    let steps = 240;
    let mut rbar = None;
    let mut kbar = None;
    for j in 0..=steps {
        let r = drift.radius + (radius - drift.radius) * j as f64 / steps as f64;
        let k = scores
            .iter()
            .filter(|(nx, _)| *nx >= r - 1e-12)
            .map(|(_, s)| -s)
            .fold(f64::INFINITY, f64::min);
        if k.is_finite() && k >= target * (1.0 - 1e-9) {
            rbar = Some(r);
            kbar = Some(k);
            break;
        }
    }
    let growth_constant = pairs
        .iter()
        .map(|(x, _)| norm(&drift.at(x)) / (1.0 + norm(x).powi(drift.growth_n as i32)))
        .fold(0.0, f64::max);
    Ok(C1Certificate {
        pairs: pairs.len(),
        max_inner: worst.0,
        rbar,
        kbar,
        growth_constant,
        flags: C1Flags {
            monotone: true,
            contractive_outside: rbar.is_some(),
            polynomial_growth: growth_constant.is_finite(),
        },
    })
}

/// Runs [`verify_c1`] and stores the certificate in the drift.
pub fn certify(drift: &mut DriftSpec, n_pairs: usize, radius: f64, seed: u64) -> Result<C1Certificate> {
    let cert = verify_c1(drift, n_pairs, radius, seed)?;
    drift.certified = cert.flags;
    drift.rbar = cert.rbar;
    drift.kbar = cert.kbar;
    Ok(cert)
}

/// States of a solution on a time grid, stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub dim: usize,
    states: Vec<f64>,
    /// Seed of the driving noise.
    pub noise_seed: u64,
    /// Extra drift applied on each step, row by row, if any.
    pub extra: Option<Vec<f64>>,
}

impl Trajectory {
    pub(crate) fn from_rows(times: Vec<f64>, dim: usize, states: Vec<f64>, noise_seed: u64) -> Self {
        debug_assert_eq!(times.len() * dim, states.len());
        Self {
            times,
            dim,
            states,
            noise_seed,
            extra: None,
        }
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn component(&self, k: usize) -> Vec<f64> {
        self.states.iter().skip(k).step_by(self.dim).copied().collect()
    }

    /// CSV with header `t,x_1,...,x_d`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for k in 1..=self.dim {
            s.push_str(&format!(",x_{k}"));
        }
        s.push('\n');
        for i in 0..self.len() {
            s.push_str(&format!("{}", self.times[i]));
            for v in self.state(i) {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Additional drift `e(n, t_n, X_n)`, applied as `e · Δt` on step `n`.
pub type ExtraDrift<'a> = &'a mut dyn FnMut(usize, f64, &[f64], &mut [f64]);

/// Explicit scheme `X_{n+1} = X_n + (b(X_n) + e_n) Δt_n + σ (G_{n+1} - G_n)`
/// on the grid of `noise`, starting from `x0` at the first grid time.
pub fn integrate(
    drift: &DriftSpec,
    sigma: &Sigma,
    x0: &[f64],
    noise: &NoisePath,
    extra: Option<ExtraDrift<'_>>,
) -> Result<Trajectory> {
    let d = drift.dim;
    if x0.len() != d || sigma.dim() != d || noise.dim() != d {
        return Err(Error::invalid(format!(
            "dimension mismatch: drift {d}, x0 {}, sigma {}, noise {}",
            x0.len(),
            sigma.dim(),
            noise.dim()
        )));
    }
    let n = noise.times.len();
    let mut states = Vec::with_capacity(n * d);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut b = vec![0.0; d];
    let mut e = vec![0.0; d];
    let mut extra = extra;
    let mut extra_log = extra.as_ref().map(|_| Vec::with_capacity(n * d));
    for i in 0..n - 1 {
        let dt = noise.times[i + 1] - noise.times[i];
        drift.eval(&x, &mut b);
        if let Some(f) = extra.as_mut() {
            f(i, noise.times[i], &x, &mut e);
            extra_log.as_mut().expect("log exists with extra").extend_from_slice(&e);
        }
        for k in 0..d {
            let dg = noise.values[k][i + 1] - noise.values[k][i];
            x[k] += (b[k] + e[k]) * dt + sigma.0[k] * dg;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { time: noise.times[i + 1] });
        }
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        times: noise.times.clone(),
        dim: d,
        states,
        noise_seed: noise.seed,
        extra: extra_log,
    })
}

/// Result of [`ou_comparison_probe`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuComparison {
    /// `2 ×` the largest ratio on the fitting batch.
    pub fitted_c: f64,
    /// Paths of the independent checking batch whose ratio exceeds `fitted_c`.
    pub violations: usize,
    pub fit_paths: usize,
    pub check_paths: usize,
    /// `(t, Ê|y_t|^2)` for the unit OU process on a coarse grid.
    pub ou_second_moment: Vec<(f64, f64)>,
}

/// Compares the solution `x` with the unit OU process `y`
/// (`dy = -y dt + dG`) driven by the same noise: fits `C` in
/// `sup_t |x - y|^2 <= C ∫_0^t e^{κ(s-t)/2} (1 + |y_s|^{2N}) ds` on one
/// batch and counts violations on a second one.
pub fn ou_comparison_probe(
    drift: &DriftSpec,
    kernel: &KernelSpec,
    x0: &[f64],
    horizon: f64,
    step: f64,
    n: usize,
    seed: u64,
) -> Result<OuComparison> {
    if n < 2 {
        return Err(Error::invalid("need at least two paths"));
    }
    let d = drift.dim;
    let sigma = Sigma::scalar(1.0, d)?;
    let ou = make_linear_drift(1.0, d)?;
    let spec = RecordSpec::for_window(kernel, 0.0, horizon, step, d, DEFAULT_PAST_TOL)?;
    let layout = WienerRecord::sample(&spec, seed)?;
    let times = noise::lattice(step, horizon);
    let synth = Synthesizer::new(kernel, &layout, &times, DEFAULT_PAST_TOL)?;
    let kappa = drift.kappa;
    let n_exp = 2 * drift.growth_n as i32;
    let stride = (times.len() / 20).max(1);
    let runs = par::try_map(n, |p| -> Result<(f64, Vec<f64>)> {
        let rec = WienerRecord::sample(&spec, replica_seed(seed, "ou-probe", p as u64))?;
        let g = synth.synthesize(&rec)?;
        let x = integrate(drift, &sigma, x0, &g, None)?;
        let y = integrate(&ou, &sigma, x0, &g, None)?;
        let mut integral = 0.0;
        let mut ratio: f64 = 0.0;
        let mut y2 = Vec::new();
        for i in 1..times.len() {
            let dt = times[i] - times[i - 1];
            let w = 1.0 + norm(y.state(i - 1)).powi(n_exp);
            integral = integral * (-0.5 * kappa * dt).exp() + w * dt;
            let gap2 = distance(x.state(i), y.state(i)).powi(2);
            if gap2 > 0.0 {
                ratio = ratio.max(gap2 / integral);
            }
            if i % stride == 0 {
                y2.push(norm(y.state(i)).powi(2));
            }
        }
        Ok((ratio, y2))
    })?;
    let half = n / 2;
    let fitted_c = 2.0 * runs[..half].iter().map(|r| r.0).fold(0.0, f64::max);
    let violations = runs[half..].iter().filter(|r| r.0 > fitted_c).count();
    let ou_second_moment = (0..runs[0].1.len())
        .map(|j| {
            let col: Vec<f64> = runs.iter().map(|r| r.1[j]).collect();
            (times[(j + 1) * stride], stats::mean(&col))
        })
        .collect();
    Ok(OuComparison {
        fitted_c,
        violations,
        fit_paths: half,
        check_paths: n - half,
        ou_second_moment,
    })
}

/// Smallest burn-in accepted for a kernel.
pub fn default_burn_in(kernel: &KernelSpec) -> f64 {
    match kernel.hurst() {
        Some(h) if h > 0.7 => 100.0,
        _ => 50.0,
    }
}

/// A state drawn (approximately) from the stationary law, together with the
/// Wiener record whose past generated it. Continuing the path with the
/// future of `record` gives a stationary trajectory on `[0, T]`.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub state: Vec<f64>,
    pub record: WienerRecord,
    pub t_burn: f64,
}

/// Runs the dynamics from `x_init` at time `-t_burn` to time 0 with the
/// noise of a fresh record whose future reaches `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn burn_in_stationary(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    x_init: &[f64],
    t_burn: f64,
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<WarmStart> {
    let spec = RecordSpec::for_window(kernel, -t_burn, horizon, step, drift.dim, DEFAULT_PAST_TOL)?;
    let record = WienerRecord::sample(&spec, seed)?;
    let n = (t_burn / step).round() as i64;
    let times: Vec<f64> = (-n..=0).map(|i| i as f64 * step).collect();
    let g = Synthesizer::new(kernel, &record, &times, DEFAULT_PAST_TOL)?.synthesize(&record)?;
    let traj = integrate(drift, sigma, x_init, &g, None)?;
    Ok(WarmStart {
        state: traj.last().to_vec(),
        record,
        t_burn,
    })
}

/// Moments of the burnt-in state at `T_burn` and `2 T_burn`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationarityCheck {
    pub t_burn: f64,
    /// `(p, Ê|X|^p at T_burn, Ê|X|^p at 2 T_burn)`.
    pub moments: Vec<(u32, f64, f64)>,
    pub max_relative_drift: f64,
    pub stable: bool,
}

/// Compares moments of the warm start after `t_burn` and `2 t_burn` on
/// independent batches; logs a warning if they drift by more than 5%.
#[allow(clippy::too_many_arguments)]
pub fn stationarity_check(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    t_burn: f64,
    step: f64,
    orders: &[u32],
    n: usize,
    seed: u64,
) -> Result<StationarityCheck> {
    let x_init = vec![0.0; drift.dim];
    let batch = |t: f64, label: &str| -> Result<Vec<f64>> {
        let norms = par::map(n, |p| {
            burn_in_stationary(drift, sigma, kernel, &x_init, t, step, step, replica_seed(seed, label, p as u64))
                .map(|w| norm(&w.state))
        });
        norms.into_iter().collect()
    };
    let a = batch(t_burn, "burn-short")?;
    let b = batch(2.0 * t_burn, "burn-long")?;
    let moments: Vec<(u32, f64, f64)> = orders
        .iter()
        .map(|&p| {
            let ma = stats::mean(&a.iter().map(|v| v.powi(p as i32)).collect::<Vec<_>>());
            let mb = stats::mean(&b.iter().map(|v| v.powi(p as i32)).collect::<Vec<_>>());
            (p, ma, mb)
        })
        .collect();
    let max_relative_drift = moments
        .iter()
        .map(|&(_, a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-300))
        .fold(0.0, f64::max);
    let stable = max_relative_drift < 0.05;
    if !stable {
        log::warn!("moments not stabilized after burn-in {t_burn}: {moments:?}");
    }
    Ok(StationarityCheck {
        t_burn,
        moments,
        max_relative_drift,
        stable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_bottom_formula() {
        let b = make_flatbottom_drift(1.0, 1.0, 2).unwrap();
        assert_eq!(b.at(&[2.0, 0.0]), vec![-1.0, 0.0]);
        assert_eq!(b.at(&[0.5, -0.5]), vec![0.0, 0.0]);
        assert_eq!(b.at(&[0.0, 0.0]), vec![0.0, 0.0]);
        let lin = make_flatbottom_drift(0.0, 2.0, 1).unwrap();
        assert_eq!(lin.at(&[1.5]), vec![-3.0]);
        assert!(make_flatbottom_drift(-1.0, 1.0, 1).is_err());
        assert!(make_flatbottom_drift(1.0, 0.0, 1).is_err());
    }

    #[test]
    fn sigma_validation() {
        assert!(Sigma::diagonal(vec![1.0, 0.0]).is_err());
        assert_eq!(Sigma::scalar(2.0, 3).unwrap().as_scalar(), Some(2.0));
        assert_eq!(Sigma::diagonal(vec![1.0, 2.0]).unwrap().as_scalar(), None);
        let s: Sigma = serde_json::from_str("[1.0, 0.5]").unwrap();
        assert_eq!(s.entries(), &[1.0, 0.5]);
        assert!(serde_json::from_str::<Sigma>("[-1.0]").is_err());
    }

    #[test]
    fn drift_choice_parsing() {
        let c: DriftChoice = serde_json::from_str(r#"{"family": "flatbottom", "R": 1.0, "kappa": 1.0}"#).unwrap();
        assert_eq!(c, DriftChoice::Flatbottom { radius: 1.0, kappa: 1.0 });
        assert!(serde_json::from_str::<DriftChoice>(r#"{"family": "flatbottom", "R": 1.0, "kappa": 1.0, "x": 1}"#).is_err());
    }
}
