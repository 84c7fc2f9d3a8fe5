//! Quadrature helpers: double-exponential rules for integrands with endpoint
//! singularities, Gauss-Legendre panels, and exact integrals of local power
//! laws used for product integration.

use crate::error::{Error, Result};

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Tanh-sinh quadrature of `f` over the finite interval `[a, b]`.
///
/// `f` receives the abscissa together with its distance to the nearest
/// endpoint, which lets callers evaluate singular factors without
/// cancellation. Algebraic endpoint singularities are handled at full
/// accuracy; a divergent integral shows up as a failure to converge.
pub fn tanh_sinh<F>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<Estimate>
where
    F: Fn(f64, f64) -> f64,
{
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::invalid(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let pi2 = std::f64::consts::FRAC_PI_2;
    let eval = |t: f64| -> Result<f64> {
        let u = pi2 * t.sinh();
        let e = (-2.0 * u.abs()).exp();
        // distance of x = tanh(u) from the nearest end of [-1, 1]
        let comp = 2.0 * e / (1.0 + e);
        if comp == 0.0 {
            return Ok(0.0);
        }
        let w = pi2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
        let dist = half * comp;
        let x = if u < 0.0 { a + dist } else { b - dist };
        if x <= a || x >= b {
            return Ok(0.0);
        }
        let v = f(x, dist);
        if !v.is_finite() {
            return Err(Error::Quadrature {
                at: x,
                reason: "integrand is not finite".into(),
            });
        }
        Ok(w * v)
    };
    let t_max = 4.5;
    let mut step = 0.5;
    let mut sum = eval(0.0)?;
    let mut k = 1;
    while (k as f64) * step <= t_max {
        let t = k as f64 * step;
        sum += eval(t)? + eval(-t)?;
        k += 1;
    }
    let mut prev = sum * step * half;
    for _level in 0..9 {
        step *= 0.5;
        let mut k = 1;
        while (k as f64) * step <= t_max {
            let t = k as f64 * step;
            sum += eval(t)? + eval(-t)?;
            k += 2;
        }
        let cur = sum * step * half;
        let err = (cur - prev).abs();
        if err <= rel_tol * cur.abs() || err < 1e-300 {
            return Ok(Estimate { value: cur, error: err });
        }
        prev = cur;
    }
    Err(Error::Quadrature {
        at: mid,
        reason: format!("no convergence, last estimate {prev:e}"),
    })
}

/// Integral over `(-inf, b]` with `b < 0`, through the substitution
/// `u = b / s`, `s` in `(0, 1]`. The integrand must decay faster than
/// `1 / |u|`.
pub fn to_minus_infinity<F>(f: F, b: f64, rel_tol: f64) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
{
    if b >= 0.0 {
        return Err(Error::invalid("upper limit must be negative"));
    }
    tanh_sinh(
        |s, _| {
            let u = b / s;
            f(u) * (-b) / (s * s)
        },
        0.0,
        1.0,
        rel_tol,
    )
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `∫_{x0}^{x1} x^q dx` for `0 <= x0 < x1`, stable when the interval is
/// short relative to its distance from the origin.
pub fn power_integral(q: f64, x0: f64, x1: f64) -> f64 {
    let p = q + 1.0;
    if x0 == 0.0 {
        return x1.powf(p) / p;
    }
    let l = (x1 / x0).ln();
    if p == 0.0 {
        return l;
    }
    x0.powf(p) * (p * l).exp_m1() / p
}

/// `∫_{x0}^{x0 + len} x^q dx` for `x0 >= 0`, `len >= 0`. The upper end is
/// never formed, so a short span far from the origin keeps full relative
/// accuracy even when `len` is below the resolution of `x0`.
pub fn power_integral_span(q: f64, x0: f64, len: f64) -> f64 {
    let p = q + 1.0;
    if x0 == 0.0 {
        return len.powf(p) / p;
    }
    let l = (len / x0).ln_1p();
    if p == 0.0 {
        return l;
    }
    x0.powf(p) * (p * l).exp_m1() / p
}

/// Average of `x^q` over `[x0, x1]`.
pub fn power_average(q: f64, x0: f64, x1: f64) -> f64 {
    power_integral(q, x0, x1) / (x1 - x0)
}

/// Fits `c x^q` through two positive points `(x1, f1)`, `(x2, f2)`.
/// Returns `None` when the values have different signs or vanish.
pub fn fit_power(x1: f64, f1: f64, x2: f64, f2: f64) -> Option<(f64, f64)> {
    if f1 == 0.0 || f2 == 0.0 || f1.signum() != f2.signum() {
        return None;
    }
    let q = (f2 / f1).ln() / (x2 / x1).ln();
    let c = f1 / x1.powf(q);
    (q.is_finite() && c.is_finite()).then_some((c, q))
}
