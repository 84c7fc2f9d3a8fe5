//! Distance estimators and decay-rate fits.

use rand_distr::{Distribution, Uniform};
use serde::Serialize;

use crate::coupling::{CouplingPlan, YStart};
use crate::dynamics::{DriftSpec, Sigma};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::rng::{generator, replica_seed};
use crate::stats::{self, Interval, LineFit};
use crate::par;

/// Initial law of the first leg in a decay experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum X0Law {
    Point(Vec<f64>),
    /// The first leg starts on the second one, which is stationary.
    SameAsY,
}

/// `d(t) = Ê|X_t - Y_t|^2` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub replicas: usize,
    pub drift: String,
    pub kernel: String,
    pub seed: u64,
    /// `samples[i][j]`: squared gap of replica `j` at `times[i]`.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

const BOOTSTRAP_ROUNDS: usize = 400;

fn bootstrap_mean(x: &[f64], seed: u64) -> (f64, f64) {
    let n = x.len();
    let mut rng = generator(seed);
    let pick = Uniform::new(0, n).expect("nonempty sample");
    let mut means: Vec<f64> = (0..BOOTSTRAP_ROUNDS)
        .map(|_| (0..n).map(|_| x[pick.sample(&mut rng)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    (stats::quantile_sorted(&means, 0.025), stats::quantile_sorted(&means, 0.975))
}

impl DecayCurve {
    /// Builds a curve from per-replica squared gaps.
    pub fn from_samples(times: Vec<f64>, samples: Vec<Vec<f64>>, drift: String, kernel: String, seed: u64) -> Result<Self> {
        if times.is_empty() || samples.len() != times.len() || samples[0].is_empty() {
            return Err(Error::Empty("decay samples"));
        }
        let values: Vec<f64> = samples.iter().map(|s| stats::mean(s)).collect();
        let (lo, hi): (Vec<f64>, Vec<f64>) = samples
            .iter()
            .enumerate()
            .map(|(i, s)| bootstrap_mean(s, replica_seed(seed, "bootstrap", i as u64)))
            .unzip();
        Ok(Self {
            replicas: samples[0].len(),
            times,
            values,
            lo,
            hi,
            drift,
            kernel,
            seed,
            samples,
        })
    }

    /// `t,mean_sq_gap,ci_low,ci_high,n`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mean_sq_gap,ci_low,ci_high,n\n");
        for i in 0..self.times.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.values[i], self.lo[i], self.hi[i], self.replicas
            ));
        }
        s
    }

    /// Default fit window: `t >= 2`, stopping before the first point whose
    /// mean is within three standard errors of zero.
    pub fn auto_window(&self) -> (f64, f64) {
        let mut t_max = self.times[0];
        for i in 0..self.times.len() {
            let se = (self.hi[i] - self.lo[i]) / (2.0 * 1.96);
            if self.values[i] <= 3.0 * se || self.values[i] <= 0.0 {
                break;
            }
            t_max = self.times[i];
        }
        (2.0, t_max)
    }
}

/// Mean squared gap of synchronous pairs with a stationary second leg.
#[allow(clippy::too_many_arguments)]
pub fn decay_curve(
    drift: &DriftSpec,
    sigma: &Sigma,
    kernel: &KernelSpec,
    x0: &X0Law,
    t_grid: &[f64],
    t_burn: f64,
    step: f64,
    n: usize,
    seed: u64,
) -> Result<DecayCurve> {
    if n == 0 {
        return Err(Error::Empty("replicas"));
    }
    let horizon = t_grid.iter().copied().fold(0.0, f64::max);
    let plan = CouplingPlan::new(kernel, drift.dim(), t_burn, horizon, step)?;
    let idx: Vec<usize> = t_grid.iter().map(|t| (t / step).round() as usize).collect();
    let y_init = vec![0.0; drift.dim()];
    let rows = par::try_map(n, |j| -> Result<Vec<f64>> {
        let s = replica_seed(seed, "decay", j as u64);
        let ys = YStart::Stationary { t_burn, x_init: y_init.clone() };
        let pair = match x0 {
            X0Law::Point(x) => plan.run(drift, sigma, x, &ys, s)?,
            X0Law::SameAsY => {
                let probe = plan.run(drift, sigma, &y_init, &ys, s)?;
                plan.run(drift, sigma, probe.y.state(0), &ys, s)?
            }
        };
        Ok(idx.iter().map(|&i| pair.gap[i] * pair.gap[i]).collect())
    })?;
    let samples = (0..t_grid.len()).map(|i| rows.iter().map(|r| r[i]).collect()).collect();
    DecayCurve::from_samples(t_grid.to_vec(), samples, drift.name().into(), kernel.label(), seed)
}

/// Fit of `log d(t) = a - t^γ / c`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub gamma_hat: f64,
    pub c_hat: f64,
    /// Intercept `a`.
    pub intercept: f64,
    pub r2: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// For fixed `γ`, least squares of `y = a - b t^γ`; returns `(a, b, ssr)`.
fn project(t: &[f64], y: &[f64], gamma: f64) -> (f64, f64, f64) {
    let x: Vec<f64> = t.iter().map(|t| t.powf(gamma)).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let a = my - slope * mx;
    let ssr = x.iter().zip(y).map(|(xi, yi)| (yi - a - slope * xi).powi(2)).sum();
    (a, -slope, ssr)
}

const GAMMA_RANGE: (f64, f64) = (0.02, 1.0);

/// Fits `log d = a - t^γ / c` over `times ∩ window` by variable projection:
/// a grid search over `γ` refined by golden-section search.
pub fn fit_subexponential_points(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (&ti, &vi) in times.iter().zip(values) {
        if ti >= window.0 - 1e-12 && ti <= window.1 + 1e-12 {
            if !(vi > 0.0) {
                return Err(Error::Fit(format!(
                    "value {vi} at t = {ti} is not positive; shrink the window below {ti}"
                )));
            }
            t.push(ti);
            y.push(vi.ln());
        }
    }
    if t.len() < 3 {
        return Err(Error::Fit(format!("only {} points in window {window:?}", t.len())));
    }
    let (g0, g1) = GAMMA_RANGE;
    let grid = 99;
    let mut best = (g0, f64::INFINITY);
    for i in 0..=grid {
        let g = g0 + (g1 - g0) * i as f64 / grid as f64;
        let ssr = project(&t, &y, g).2;
        if ssr < best.1 {
            best = (g, ssr);
        }
    }
    let width = (g1 - g0) / grid as f64;
    let (mut lo, mut hi) = ((best.0 - width).max(g0), (best.0 + width).min(g1));
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (project(&t, &y, c).2, project(&t, &y, d).2);
    for _ in 0..80 {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = project(&t, &y, c).2;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = project(&t, &y, d).2;
        }
    }
    let mut gamma = 0.5 * (lo + hi);
    if project(&t, &y, best.0).2 < project(&t, &y, gamma).2 {
        gamma = best.0;
    }
    let (a, b, ssr) = project(&t, &y, gamma);
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if !(b > 0.0) {
        return Err(Error::Fit("the curve does not decay in the window".into()));
    }
    Ok(RateFit {
        gamma_hat: gamma,
        c_hat: 1.0 / b,
        intercept: a,
        r2: if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 },
        window,
        points: t.len(),
    })
}

/// [`fit_subexponential_points`] on a decay curve; `None` selects
/// [`DecayCurve::auto_window`].
pub fn fit_subexponential(curve: &DecayCurve, window: Option<(f64, f64)>) -> Result<RateFit> {
    fit_subexponential_points(&curve.times, &curve.values, window.unwrap_or_else(|| curve.auto_window()))
}

/// Percentile bootstrap interval for `γ̂`, resampling replicas.
pub fn gamma_bootstrap(curve: &DecayCurve, window: (f64, f64), rounds: usize, seed: u64) -> Result<Interval> {
    let fit = fit_subexponential(curve, Some(window))?;
    let n = curve.replicas;
    let pick = Uniform::new(0, n).map_err(|e| Error::Fit(e.to_string()))?;
    let mut rng = generator(replica_seed(seed, "gamma-bootstrap", 0));
    let mut gammas = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let idx: Vec<usize> = (0..n).map(|_| pick.sample(&mut rng)).collect();
        let values: Vec<f64> = curve
            .samples
            .iter()
            .map(|s| idx.iter().map(|&i| s[i]).sum::<f64>() / n as f64)
            .collect();
        if let Ok(f) = fit_subexponential_points(&curve.times, &values, window) {
            gammas.push(f.gamma_hat);
        }
    }
    if gammas.len() < rounds / 2 {
        return Err(Error::Fit("bootstrap fits failed too often".into()));
    }
    gammas.sort_by(f64::total_cmp);
    Ok(Interval {
        estimate: fit.gamma_hat,
        lo: stats::quantile_sorted(&gammas, 0.025),
        hi: stats::quantile_sorted(&gammas, 0.975),
    })
}

/// Slope of `-log d(t)` against `t` over the window: the exponential rate.
pub fn exponential_rate(curve: &DecayCurve, window: (f64, f64)) -> Result<LineFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = curve
        .times
        .iter()
        .zip(&curve.values)
        .filter(|(t, v)| **t >= window.0 && **t <= window.1 && **v > 0.0)
        .map(|(t, v)| (*t, -v.ln()))
        .unzip();
    stats::linear_fit(&t, &y)
}

/// `γ = 2(α + 1/2 - ε) / (1 + 1/υ + 2(α + 1/2 - ε))`; `υ` may be infinite.
pub fn gamma_exponent(alpha: f64, epsilon: f64, upsilon: f64) -> Result<f64> {
    let a = alpha + 0.5;
    crate::error::open_interval("epsilon", epsilon, 0.0, a, "(0, alpha + 1/2)")?;
    if !(upsilon > 0.0) {
        return Err(Error::Domain { name: "upsilon", value: upsilon, range: "(0, inf]" });
    }
    let e = 2.0 * (a - epsilon);
    Ok(e / (1.0 + 1.0 / upsilon + e))
}

/// Exact quadratic Wasserstein distance between two empirical laws on the
/// line, by matching quantile functions.
pub fn wasserstein2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("sample"));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    if n == m {
        let s: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum();
        return Ok((s / n as f64).sqrt());
    }
    // merge the breakpoints i/n and j/m of the two quantile functions
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0;
    let mut acc = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        acc += (next - u) * (x[i] - y[j]).powi(2);
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    Ok(acc.sqrt())
}

/// Failure frequency of a coupling with a 95% Wilson interval: an upper
/// estimate of the total variation distance.
pub fn tv_from_coupling(success: &[bool]) -> Result<Interval> {
    if success.is_empty() {
        return Err(Error::Empty("coupling indicators"));
    }
    let failures = success.iter().filter(|s| !**s).count();
    Ok(stats::wilson(failures, success.len(), 0.95))
}
