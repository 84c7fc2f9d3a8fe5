//! Moving-average kernels `g`, their derivatives, and executable checks of
//! the regularity bounds the coupling arguments rely on:
//!
//! ```text
//! |g''(u)| <= C1 (-u)^(-α-2)   for u <= -1      (memory)
//! |g''(u)| <= C2 (-u)^(-ζ-2)   for u in [-2, 0) (local regularity)
//! ```
//!
//! Kernels vanish for `u > 0`. The fractional kernel `(-u)^(H-1/2)` yields
//! fractional Brownian motion up to the multiplicative constant, which is
//! fixed to one throughout the crate.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{open_interval, Error, Result};
use crate::quad;

/// Regularity constants of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha: f64,
    pub zeta: f64,
    pub c1: f64,
    pub c2: f64,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied kernel together with its first two derivatives.
#[derive(Clone)]
pub struct CustomKernel {
    pub name: String,
    g: ScalarFn,
    g1: ScalarFn,
    g2: ScalarFn,
}

impl CustomKernel {
    pub fn new<G, G1, G2>(name: impl Into<String>, g: G, g1: G1, g2: G2) -> Self
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        G1: Fn(f64) -> f64 + Send + Sync + 'static,
        G2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            g: Arc::new(g),
            g1: Arc::new(g1),
            g2: Arc::new(g2),
        }
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Fractional { h: f64 },
    Mixed { h: f64, hp: f64 },
    Custom(CustomKernel),
}

/// Serializable kernel choice, as it appears in experiment configurations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelChoice {
    Fractional {
        #[serde(rename = "H")]
        h: f64,
    },
    Mixed {
        #[serde(rename = "H")]
        h: f64,
        #[serde(rename = "Hp")]
        hp: f64,
    },
}

/// A one-dimensional kernel with its certificate. Multi-dimensional noise
/// applies the same kernel to every component.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: Family,
    cert: Certificate,
}

/// Coefficient of `(-u)^(H-5/2)` in the second derivative of `(-u)^(H-1/2)`.
fn second_derivative_coefficient(h: f64) -> f64 {
    (h - 0.5) * (h - 1.5)
}

fn power(e: f64, u: f64) -> f64 {
    if u < 0.0 {
        (-u).powf(e)
    } else {
        0.0
    }
}

fn power_d1(e: f64, u: f64) -> f64 {
    if u < 0.0 {
        -e * (-u).powf(e - 1.0)
    } else {
        0.0
    }
}

fn power_d2(e: f64, u: f64) -> f64 {
    if u < 0.0 {
        e * (e - 1.0) * (-u).powf(e - 2.0)
    } else {
        0.0
    }
}

/// Mean of `(-u)_+^e` over `[a, b]`.
fn power_cell_average(e: f64, a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        return 0.0;
    }
    let x0 = (-b).max(0.0);
    let x1 = -a;
    quad::power_integral(e, x0, x1) / (b - a)
}

/// `(J(a) - J(b)) / (b - a)` with `J(x) = ∫_{x-s-dt}^{x-s} (-v)^e dv`, the
/// mean of `(-(u - s - dt))^e - (-(u - s))^e` over a cell with `b <= 0`.
fn power_shift_average(e: f64, a: f64, b: f64, s: f64, dt: f64) -> f64 {
    let j = |x: f64| quad::power_integral_span(e, s - x, dt);
    (j(a) - j(b)) / (b - a)
}

impl KernelSpec {
    /// The fractional kernel `(-u)^(H-1/2)`, `H` in `(0, 1)`.
    pub fn fractional(h: f64) -> Result<Self> {
        open_interval("H", h, 0.0, 1.0, "(0, 1)")?;
        let c = second_derivative_coefficient(h).abs();
        Ok(Self {
            family: Family::Fractional { h },
            cert: Certificate {
                alpha: 0.5 - h,
                zeta: 0.5 - h,
                c1: c,
                c2: c,
            },
        })
    }

    /// The two-scale kernel `(-u)^(H-1/2) + (-u)^(H'-1/2)` with `H < H'`:
    /// local regularity of the smaller index, memory of the larger.
    pub fn mixed(h: f64, hp: f64) -> Result<Self> {
        open_interval("H", h, 0.0, 1.0, "(0, 1)")?;
        open_interval("Hp", hp, h, 1.0, "(H, 1)")?;
        let a = second_derivative_coefficient(h).abs();
        let b = second_derivative_coefficient(hp).abs();
        Ok(Self {
            family: Family::Mixed { h, hp },
            cert: Certificate {
                alpha: 0.5 - hp,
                zeta: 0.5 - h,
                // sup over u <= -1 of a (-u)^(H-H') + b, attained at u = -1
                c1: a + b,
                // sup over [-2, 0) of a + b (-u)^(H'-H), attained at u = -2
                c2: a + b * 2f64.powf(hp - h),
            },
        })
    }

    /// A caller-defined kernel with candidate constants; use [`verify_c2`]
    /// to certify them.
    pub fn custom(kernel: CustomKernel, cert: Certificate) -> Result<Self> {
        if !(cert.alpha > -0.5) {
            return Err(Error::Domain { name: "alpha", value: cert.alpha, range: "(-1/2, inf)" });
        }
        if !(cert.zeta < 0.5) {
            return Err(Error::Domain { name: "zeta", value: cert.zeta, range: "(-inf, 1/2)" });
        }
        if !(cert.c1 > 0.0 && cert.c2 > 0.0) {
            return Err(Error::invalid("C1 and C2 must be positive"));
        }
        Ok(Self {
            family: Family::Custom(kernel),
            cert,
        })
    }

    pub fn from_choice(choice: KernelChoice) -> Result<Self> {
        match choice {
            KernelChoice::Fractional { h } => Self::fractional(h),
            KernelChoice::Mixed { h, hp } => Self::mixed(h, hp),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn certificate(&self) -> Certificate {
        self.cert
    }

    pub fn alpha(&self) -> f64 {
        self.cert.alpha
    }

    pub fn zeta(&self) -> f64 {
        self.cert.zeta
    }

    pub fn c1(&self) -> f64 {
        self.cert.c1
    }

    pub fn c2(&self) -> f64 {
        self.cert.c2
    }

    /// Hurst index of a fractional kernel.
    pub fn hurst(&self) -> Option<f64> {
        match self.family {
            Family::Fractional { h } => Some(h),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.family {
            Family::Fractional { h } => format!("fractional(H={h})"),
            Family::Mixed { h, hp } => format!("mixed(H={h}, Hp={hp})"),
            Family::Custom(c) => format!("custom({})", c.name),
        }
    }

    pub fn g(&self, u: f64) -> f64 {
        match &self.family {
            Family::Fractional { h } => power(h - 0.5, u),
            Family::Mixed { h, hp } => power(h - 0.5, u) + power(hp - 0.5, u),
            Family::Custom(c) => {
                if u > 0.0 {
                    0.0
                } else {
                    (c.g)(u)
                }
            }
        }
    }

    pub fn g1(&self, u: f64) -> f64 {
        match &self.family {
            Family::Fractional { h } => power_d1(h - 0.5, u),
            Family::Mixed { h, hp } => power_d1(h - 0.5, u) + power_d1(hp - 0.5, u),
            Family::Custom(c) => {
                if u > 0.0 {
                    0.0
                } else {
                    (c.g1)(u)
                }
            }
        }
    }

    pub fn g2(&self, u: f64) -> f64 {
        match &self.family {
            Family::Fractional { h } => power_d2(h - 0.5, u),
            Family::Mixed { h, hp } => power_d2(h - 0.5, u) + power_d2(hp - 0.5, u),
            Family::Custom(c) => {
                if u > 0.0 {
                    0.0
                } else {
                    (c.g2)(u)
                }
            }
        }
    }

    /// Mean of `g` over the cell `[a, b]`. Exact for the library kernels;
    /// for custom kernels a Gauss-Legendre rule, except on a cell reaching
    /// `0-` where a local power law is fitted and integrated exactly.
    pub fn cell_average(&self, a: f64, b: f64) -> f64 {
        debug_assert!(b > a);
        match &self.family {
            Family::Fractional { h } => power_cell_average(h - 0.5, a, b),
            Family::Mixed { h, hp } => {
                power_cell_average(h - 0.5, a, b) + power_cell_average(hp - 0.5, a, b)
            }
            Family::Custom(c) => custom_cell_average(&*c.g, a, b),
        }
    }

    /// Mean of `g(u - s - dt) - g(u - s)` over a past cell `[a, b]`:
    /// `b <= 0`, `s >= 0`, and `dt` may be negative as long as
    /// `b - s - dt <= 0`. For the library kernels the two shifted
    /// edges are never formed, which keeps the weight of a cell at depth
    /// `10^12` accurate for shifts of order one.
    pub fn shift_average(&self, a: f64, b: f64, s: f64, dt: f64) -> f64 {
        debug_assert!(b > a && b <= 0.0 && s >= 0.0 && b - s - dt <= 1e-9 * (1.0 + a.abs()));
        match &self.family {
            Family::Fractional { h } => power_shift_average(h - 0.5, a, b, s, dt),
            Family::Mixed { h, hp } => power_shift_average(h - 0.5, a, b, s, dt) + power_shift_average(hp - 0.5, a, b, s, dt),
            Family::Custom(c) => custom_cell_average(&*c.g, a - s - dt, b - s - dt) - custom_cell_average(&*c.g, a - s, b - s),
        }
    }

    /// `Var(G_t) = ∫ (g(u - t) - g(u))^2 du` by quadrature.
    pub fn increment_variance(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        let tol = 1e-11;
        let near = quad::tanh_sinh(|u, d| {
            // on [0, t] only the shifted kernel is nonzero; `d` measures the
            // distance to the singular end without cancellation
            let lag = if u > 0.5 * t { -d } else { u - t };
            self.g(lag).powi(2)
        }, 0.0, t, tol)?;
        let mid = quad::tanh_sinh(|u, d| {
            let v = if u > -0.5 { -d } else { u };
            let x = self.g(v - t) - self.g(v);
            x * x
        }, -1.0, 0.0, tol)?;
        let far = quad::to_minus_infinity(|u| (self.g(u - t) - self.g(u)).powi(2), -1.0, tol)?;
        Ok(near.value + mid.value + far.value)
    }

    /// Closed-form `Var(G_t)` where one is available.
    pub fn exact_increment_variance(&self, t: f64) -> Option<f64> {
        self.hurst().map(|h| fractional_variance_constant(h) * t.powf(2.0 * h))
    }

    /// `Var(G_t)`, exact when possible.
    pub fn variance(&self, t: f64) -> Result<f64> {
        match self.exact_increment_variance(t) {
            Some(v) => Ok(v),
            None => self.increment_variance(t),
        }
    }
}

/// `Var(G_1)` for the fractional kernel with unit constant,
/// `Γ(H+1/2)^2 / (Γ(2H+1) sin(πH))`.
pub fn fractional_variance_constant(h: f64) -> f64 {
    gamma(h + 0.5).powi(2) / (gamma(2.0 * h + 1.0) * (std::f64::consts::PI * h).sin())
}

const GL_ORDER: usize = 8;

fn custom_cell_average(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        return 0.0;
    }
    let top = b.min(0.0);
    let width = top - a;
    if width <= 0.0 {
        return 0.0;
    }
    let integral = if top == 0.0 {
        // cell touching the singular end: fit c x^q on x = -u
        let (x1, x2) = (0.25 * width, 0.5 * width);
        match quad::fit_power(x1, g(-x1), x2, g(-x2)) {
            Some((c, q)) if q > -1.0 => c * quad::power_integral(q, 0.0, width),
            Some(_) => f64::NAN,
            None => gauss_legendre_integral(g, a, top),
        }
    } else {
        gauss_legendre_integral(g, a, top)
    };
    integral / (b - a)
}

fn gauss_legendre_integral(g: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    thread_local! {
        static RULE: (Vec<f64>, Vec<f64>) = quad::gauss_legendre(GL_ORDER);
    }
    RULE.with(|(x, w)| {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * x.iter().zip(w).map(|(x, w)| w * g(mid + half * x)).sum::<f64>()
    })
}

/// Evaluation points for [`verify_c2`].
#[derive(Debug, Clone, PartialEq)]
pub struct C2Grid {
    /// Points `u <= -1`.
    pub far: Vec<f64>,
    /// Points in `[-2, 0)`.
    pub near: Vec<f64>,
}

impl Default for C2Grid {
    fn default() -> Self {
        let far = (0..=240).map(|i| -(10f64.powf(6.0 * i as f64 / 240.0))).collect();
        let mut near = Vec::new();
        let mut u = -2.0;
        while u < -1e-9 {
            near.push(u);
            u *= 0.9;
        }
        Self { far, near }
    }
}

/// One inequality checked over a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioCheck {
    pub name: &'static str,
    /// Largest |lhs| / |rhs| over the grid.
    pub max_ratio: f64,
    /// Abscissa of the largest ratio.
    pub worst_u: f64,
    /// Grid points where the kernel could not be evaluated.
    pub failed_points: Vec<f64>,
    pub pass: bool,
}

/// A bound with an unspecified constant; the report gives the smallest
/// constant compatible with the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedBound {
    pub name: &'static str,
    pub constant: f64,
    pub failed_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct C2Report {
    pub kernel: String,
    pub certificate: Certificate,
    pub checks: Vec<RatioCheck>,
    pub fitted: Vec<FittedBound>,
    pub tolerance: f64,
    pub pass: bool,
}

fn ratio_check(
    name: &'static str,
    points: &[f64],
    tol: f64,
    lhs: impl Fn(f64) -> f64,
    rhs: impl Fn(f64) -> f64,
) -> RatioCheck {
    let mut max_ratio = 0.0f64;
    let mut worst_u = f64::NAN;
    let mut failed_points = Vec::new();
    for &u in points {
        let l = lhs(u).abs();
        let r = rhs(u).abs();
        if !l.is_finite() || !r.is_finite() {
            failed_points.push(u);
            continue;
        }
        let ratio = if l == 0.0 { 0.0 } else { l / r };
        if ratio > max_ratio || worst_u.is_nan() {
            max_ratio = max_ratio.max(ratio);
            worst_u = u;
        }
    }
    RatioCheck {
        name,
        max_ratio,
        worst_u,
        pass: failed_points.is_empty() && max_ratio <= 1.0 + tol,
        failed_points,
    }
}

/// Checks the certificate of `kernel` on `grid`: the two second-derivative
/// bounds, the derived first-derivative decay
/// `|g'(u)| <= C1/(α+1) (-u)^(-(α+1))` on `u <= -1`, plus the smallest
/// constants in the growth bounds of `g` and `g'`.
pub fn verify_c2(kernel: &KernelSpec, grid: &C2Grid) -> C2Report {
    let c = kernel.certificate();
    let tol = 1e-9;
    let checks = vec![
        ratio_check("second derivative, far field", &grid.far, tol, |u| kernel.g2(u), |u| {
            c.c1 * (-u).powf(-c.alpha - 2.0)
        }),
        ratio_check("second derivative, near zero", &grid.near, tol, |u| kernel.g2(u), |u| {
            c.c2 * (-u).powf(-c.zeta - 2.0)
        }),
        ratio_check("first derivative, far field", &grid.far, tol, |u| kernel.g1(u), |u| {
            c.c1 / (c.alpha + 1.0) * (-u).powf(-(c.alpha + 1.0))
        }),
    ];
    let far_g = |r: f64| {
        if c.alpha > 0.0 {
            (-r).powf(-c.alpha)
        } else {
            1.0 + (-r).powf(-c.alpha)
        }
    };
    let near_g1 = |r: f64| {
        if c.zeta < -1.0 {
            (-r).powf(-c.zeta - 1.0)
        } else {
            1.0 + (-r).powf(-c.zeta - 1.0)
        }
    };
    let near_g = |r: f64| {
        let s = -r;
        if c.zeta < -1.0 {
            s.powf(-c.zeta)
        } else if c.zeta < 0.0 {
            s + s.powf(-c.zeta)
        } else {
            1.0 + s + s.powf(-c.zeta)
        }
    };
    let fitted = vec![
        fitted_bound("kernel growth, far field", &grid.far, |u| kernel.g(u), far_g),
        fitted_bound("first derivative, near zero", &grid.near, |u| kernel.g1(u), near_g1),
        fitted_bound("kernel, near zero", &grid.near, |u| kernel.g(u), near_g),
    ];
    let pass = checks.iter().all(|c| c.pass)
        && fitted.iter().all(|f| f.constant.is_finite() && f.failed_points.is_empty());
    C2Report {
        kernel: kernel.label(),
        certificate: c,
        checks,
        fitted,
        tolerance: tol,
        pass,
    }
}

fn fitted_bound(
    name: &'static str,
    points: &[f64],
    lhs: impl Fn(f64) -> f64,
    shape: impl Fn(f64) -> f64,
) -> FittedBound {
    let check = ratio_check(name, points, 0.0, lhs, shape);
    FittedBound {
        name,
        constant: check.max_ratio,
        failed_points: check.failed_points,
    }
}

/// `Var(G_t)` by quadrature on each `t`, confirming the increments are
/// square integrable.
pub fn increment_square_integrability(kernel: &KernelSpec, ts: &[f64]) -> Result<Vec<(f64, f64)>> {
    ts.iter()
        .map(|&t| kernel.increment_variance(t).map(|v| (t, v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacePoint {
    pub p: f64,
    pub laplace_g: f64,
    pub laplace_h: f64,
    /// `|L_h(p) p^2 L_g(p) - 1|`
    pub error: f64,
    /// Bound on the neglected tail beyond the truncation point.
    pub tail_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplaceReport {
    pub points: Vec<LaplacePoint>,
    pub max_error: f64,
}

/// Laplace transform `∫_0^∞ e^{-pt} f(-t) dt` of a function on `u < 0`.
pub fn laplace_transform(f: &dyn Fn(f64) -> f64, p: f64) -> Result<(f64, f64)> {
    if !(p > 0.0) {
        return Err(Error::Domain { name: "p", value: p, range: "(0, inf)" });
    }
    let t_max = 80.0 / p;
    let est = quad::tanh_sinh(|t, d| {
        let lag = if t < 0.5 * t_max { d } else { t };
        (-p * lag).exp() * f(-lag)
    }, 0.0, t_max, 1e-12)
    .map_err(|e| match e {
        Error::Quadrature { reason, .. } => Error::Quadrature { at: p, reason },
        other => other,
    })?;
    // the integrands grow at most polynomially; bound the tail by the
    // value at the cut-off times an exponential envelope
    let edge = f(-t_max).abs().max(f(-2.0 * t_max).abs());
    let tail = 2.0 * edge * (-p * t_max).exp() / p;
    Ok((est.value, tail + est.error))
}

/// Checks the conjugacy relation `L_h(p) = 1 / (p^2 L_g(p))` between the
/// kernel and a candidate conjugate kernel `h` (both as functions of
/// `u < 0`).
pub fn laplace_conjugate_check(
    kernel: &KernelSpec,
    h: &dyn Fn(f64) -> f64,
    p_grid: &[f64],
) -> Result<LaplaceReport> {
    let g = |u: f64| kernel.g(u);
    let mut points = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let (lg, tg) = laplace_transform(&g, p)?;
        let (lh, th) = laplace_transform(h, p)?;
        points.push(LaplacePoint {
            p,
            laplace_g: lg,
            laplace_h: lh,
            error: (lh * p * p * lg - 1.0).abs(),
            tail_bound: tg + th,
        });
    }
    let max_error = points.iter().map(|p| p.error).fold(0.0, f64::max);
    Ok(LaplaceReport { points, max_error })
}

/// The conjugate of the fractional kernel normalised so that the Laplace
/// identity holds exactly: `h(u) = (-u)^(1/2-H) / (Γ(H+1/2) Γ(3/2-H))`.
pub fn normalized_fractional_conjugate(h: f64) -> impl Fn(f64) -> f64 + Send + Sync {
    let scale = 1.0 / (gamma(h + 0.5) * gamma(1.5 - h));
    move |u: f64| if u < 0.0 { scale * (-u).powf(0.5 - h) } else { 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_kernel_is_constant() {
        let k = KernelSpec::fractional(0.5).unwrap();
        assert_eq!(k.g(-3.0), 1.0);
        assert_eq!(k.g(2.0), 0.0);
        assert_eq!(k.c1(), 0.0);
    }

    #[test]
    fn fractional_constants() {
        let k = KernelSpec::fractional(0.75).unwrap();
        assert!((k.alpha() + 0.25).abs() < 1e-15);
        assert!((k.c1() - 0.1875).abs() < 1e-15);
        assert!(KernelSpec::fractional(1.0).is_err());
        assert!(KernelSpec::mixed(0.5, 0.4).is_err());
    }

    #[test]
    fn cell_average_of_a_custom_power_matches_the_exact_one() {
        let e = -0.3;
        let custom = KernelSpec::custom(
            CustomKernel::new("power", move |u: f64| (-u).powf(e), |_| 0.0, |_| 0.0),
            Certificate { alpha: 0.3, zeta: 0.3, c1: 1.0, c2: 1.0 },
        )
        .unwrap();
        let exact = KernelSpec::fractional(0.2).unwrap();
        for (a, b) in [(-0.01, 0.0), (-0.02, -0.01), (-5.0, -4.0), (-0.005, 0.005)] {
            let x = custom.cell_average(a, b);
            let y = exact.cell_average(a, b);
            assert!(((x - y) / y).abs() < 1e-8, "{a} {b}: {x} {y}");
        }
    }

    #[test]
    fn laplace_identity_for_brownian_kernel() {
        let k = KernelSpec::fractional(0.5).unwrap();
        let h = |u: f64| if u < 0.0 { 1.0 } else { 0.0 };
        let r = laplace_conjugate_check(&k, &h, &[0.1, 1.0, 10.0]).unwrap();
        assert!(r.max_error < 1e-10, "{r:?}");
    }
}
