//! Two-sided Wiener records and synthesis of the moving-average noise
//!
//! ```text
//! G_t = ∫_{-∞}^0 [g(u - t) - g(u)] dW_u + ∫_0^t g(u - t) dW_u .
//! ```
//!
//! A record stores Wiener increments on a partition of `[-T_past, T]`:
//! uniform cells of width `h` on `[-M h, T]` and geometrically growing cells
//! further out. Each cell contributes its increment times the mean of the
//! shifted kernel over the cell, which is the conditional expectation of the
//! exact stochastic integral given the cell increments. On the uniform part
//! the sum is a convolution and is evaluated with the FFT.

use serde::Serialize;

use crate::conv::Convolver;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::rng::NormalStream;
use crate::stats::{self, Interval};

/// Relative width of the geometric cells in the remote past.
pub const FAR_CELL_RATIO: f64 = 0.02;

/// Default relative tolerance on the variance discarded by truncating the
/// past.
pub const DEFAULT_PAST_TOL: f64 = 1e-4;

/// Shape of a Wiener record.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordSpec {
    pub step: f64,
    /// Future horizon `T`.
    pub horizon: f64,
    /// Length of the uniformly gridded part of the past.
    pub uniform_past: f64,
    /// Total depth of the past, `T_past >= uniform_past`.
    pub t_past: f64,
    pub dim: usize,
}

impl RecordSpec {
    /// Layout able to synthesize `kernel` on `[t_min, t_max]` (where
    /// `t_min <= 0`), with the past deep enough for `tol`.
    pub fn for_window(kernel: &KernelSpec, t_min: f64, t_max: f64, step: f64, dim: usize, tol: f64) -> Result<Self> {
        let uniform_past = (1.0 - t_min.min(0.0)).max(1.0);
        let needed = required_past(kernel, t_min.min(0.0), t_max, tol)?;
        Ok(Self {
            step,
            horizon: t_max,
            uniform_past,
            t_past: needed.max(uniform_past),
            dim,
        })
    }
}

/// Depth of past needed so that cutting the integral at `-T_past` drops at
/// most `tol · Var(G_s)` of variance at every time in `[t_min, t_max]`,
/// where `s = max(|t_min|, t_max)`.
///
/// Uses the far-field derivative bound `|g'(r)| <= C1/(α+1) (-r)^(-(α+1))`,
/// so that `|g(u - t) - g(u)| <= s C1/(α+1) (-u/2)^(-(α+1))` once
/// `-u >= 2 s`.
pub fn required_past(kernel: &KernelSpec, t_min: f64, t_max: f64, tol: f64) -> Result<f64> {
    let s = t_max.abs().max(t_min.abs());
    if s == 0.0 {
        return Ok(0.0);
    }
    let alpha = kernel.alpha();
    let k = kernel.c1() / (alpha + 1.0);
    let floor = 2.0 * s;
    if k == 0.0 {
        return Ok(floor);
    }
    let v = kernel.variance(s)?;
    let q = 2.0 * alpha + 1.0;
    let num = s * s * k * k * 4f64.powf(alpha + 1.0);
    let tp = (num / (q * tol * v)).powf(1.0 / q);
    Ok(tp.max(floor))
}

/// Analytic bound on the relative variance discarded at depth `t_past`.
pub fn truncation_bound(kernel: &KernelSpec, t_min: f64, t_max: f64, t_past: f64) -> Result<f64> {
    let s = t_max.abs().max(t_min.abs());
    if s == 0.0 || kernel.c1() == 0.0 {
        return Ok(0.0);
    }
    if t_past < 2.0 * s {
        return Ok(f64::INFINITY);
    }
    let alpha = kernel.alpha();
    let k = kernel.c1() / (alpha + 1.0);
    let q = 2.0 * alpha + 1.0;
    let v = kernel.variance(s)?;
    Ok(s * s * k * k * 4f64.powf(alpha + 1.0) * t_past.powf(-q) / (q * v))
}

/// Wiener increments on `[-T_past, T]`, one sequence per dimension.
///
/// Uniform cell `k` (an integer, negative in the past) covers
/// `[k h, (k + 1) h]`; its increment depends only on `(seed, dimension, k)`,
/// so extending the horizon or changing the uniform past never alters
/// existing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerRecord {
    seed: u64,
    step: f64,
    past_cells: usize,
    far_edges: Vec<f64>,
    uniform: Vec<Vec<f64>>,
    far: Vec<Vec<f64>>,
}

impl WienerRecord {
    pub fn sample(spec: &RecordSpec, seed: u64) -> Result<Self> {
        let h = spec.step;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain { name: "step", value: h, range: "(0, inf)" });
        }
        if spec.horizon > 0.0 && h > spec.horizon {
            return Err(Error::invalid(format!("step {h} exceeds the horizon {}", spec.horizon)));
        }
        if spec.horizon < 0.0 || spec.t_past < 0.0 || spec.dim == 0 {
            return Err(Error::invalid("horizon and past must be nonnegative, dimension positive"));
        }
        let m = (spec.uniform_past.min(spec.t_past) / h + 1e-9).floor() as usize;
        let mut far_edges = vec![m as f64 * h];
        let mut e = far_edges[0];
        while e < spec.t_past * (1.0 - 1e-12) {
            e = (e * (1.0 + FAR_CELL_RATIO)).max(e + h).min(spec.t_past);
            far_edges.push(e);
        }
        let n = (spec.horizon / h - 1e-9).ceil().max(0.0) as usize;
        let mut rec = Self {
            seed,
            step: h,
            past_cells: m,
            far_edges,
            uniform: vec![Vec::new(); spec.dim],
            far: vec![Vec::new(); spec.dim],
        };
        let sq = h.sqrt();
        for d in 0..spec.dim {
            let mut u = NormalStream::new(seed, "uniform", d as u64).take(-(m as i64), m + n);
            u.iter_mut().for_each(|x| *x *= sq);
            rec.uniform[d] = u;
            let widths: Vec<f64> = rec.far_edges.windows(2).map(|w| w[1] - w[0]).collect();
            let mut f = NormalStream::new(seed, "far", d as u64).take(0, widths.len());
            f.iter_mut().zip(&widths).for_each(|(x, w)| *x *= w.sqrt());
            rec.far[d] = f;
        }
        Ok(rec)
    }

    /// Extends the future part so that it reaches at least `horizon`.
    pub fn extend_to(&mut self, horizon: f64) {
        let need = (horizon / self.step - 1e-9).ceil().max(0.0) as usize;
        let have = self.future_cells();
        if need <= have {
            return;
        }
        let sq = self.step.sqrt();
        for (d, u) in self.uniform.iter_mut().enumerate() {
            let mut extra = NormalStream::new(self.seed, "uniform", d as u64).take(have as i64, need - have);
            extra.iter_mut().for_each(|x| *x *= sq);
            u.extend(extra);
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.uniform.len()
    }

    /// Number of uniform cells in the past.
    pub fn past_cells(&self) -> usize {
        self.past_cells
    }

    pub fn future_cells(&self) -> usize {
        self.uniform[0].len() - self.past_cells
    }

    pub fn horizon(&self) -> f64 {
        self.future_cells() as f64 * self.step
    }

    pub fn uniform_past(&self) -> f64 {
        self.past_cells as f64 * self.step
    }

    pub fn t_past(&self) -> f64 {
        *self.far_edges.last().expect("edges are never empty")
    }

    /// Increments of the uniform cells `-M, ..., N - 1` for dimension `d`.
    pub fn uniform_increments(&self, d: usize) -> &[f64] {
        &self.uniform[d]
    }

    /// Increment of uniform cell `k` (which may be negative).
    pub fn cell(&self, d: usize, k: i64) -> f64 {
        self.uniform[d][(k + self.past_cells as i64) as usize]
    }

    /// Increments of the future cells for dimension `d`.
    pub fn future_increments(&self, d: usize) -> &[f64] {
        &self.uniform[d][self.past_cells..]
    }

    /// Geometric cells as `(left, right, increment)`, nearest first.
    pub fn far_cells(&self, d: usize) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.far_edges
            .windows(2)
            .zip(&self.far[d])
            .map(|(e, &dw)| (-e[1], -e[0], dw))
    }

    pub fn far_cell_count(&self) -> usize {
        self.far_edges.len() - 1
    }

    /// The path `W` at every cell edge, ascending in time, with `W_0 = 0`.
    pub fn path(&self, d: usize) -> (Vec<f64>, Vec<f64>) {
        let h = self.step;
        let m = self.past_cells;
        let mut times = Vec::new();
        let mut values = Vec::new();
        // remote past, from the deepest edge inwards
        let far_total: f64 = self.far[d].iter().sum();
        let uniform_past_total: f64 = self.uniform[d][..m].iter().sum();
        let mut w = -(far_total + uniform_past_total);
        for (i, e) in self.far_edges.iter().enumerate().rev() {
            times.push(-e);
            values.push(w);
            if i > 0 {
                w += self.far[d][i - 1];
            }
        }
        // the last far edge coincides with the start of the uniform part
        times.pop();
        values.pop();
        let mut w = -uniform_past_total;
        for k in 0..self.uniform[d].len() {
            times.push((k as f64 - m as f64) * h);
            values.push(w);
            w += self.uniform[d][k];
        }
        times.push(self.horizon());
        values.push(w);
        // pin W_0 = 0 exactly
        values[times.len() - 1 - self.future_cells()] = 0.0;
        (times, values)
    }
}

/// Convenience constructor: uniform cells on `[-min(T_past, 1), T]`,
/// geometric cells beyond, one dimension.
pub fn sample_wiener(t_past: f64, horizon: f64, step: f64, seed: u64) -> Result<WienerRecord> {
    WienerRecord::sample(
        &RecordSpec {
            step,
            horizon,
            uniform_past: t_past.min(1.0),
            t_past,
            dim: 1,
        },
        seed,
    )
}

/// Mean of the kernel over the lattice cells `[-(m+1) h, -m h]`.
#[derive(Debug, Clone)]
pub struct LagTable {
    step: f64,
    weights: Vec<f64>,
}

impl LagTable {
    pub fn new(kernel: &KernelSpec, step: f64, len: usize) -> Self {
        let weights = (0..len)
            .map(|m| kernel.cell_average(-((m + 1) as f64) * step, -(m as f64) * step))
            .collect();
        Self { step, weights }
    }

    /// Weight of uniform cell `k` for the kernel shifted to lattice time `n`.
    #[inline]
    pub fn at(&self, n: i64, k: i64) -> f64 {
        let m = n - k - 1;
        if m < 0 {
            0.0
        } else {
            self.weights[m as usize]
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

/// Samples of `G` on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoisePath {
    pub times: Vec<f64>,
    /// `values[d][i]` is component `d` at `times[i]`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
    pub t_past: f64,
    /// Analytic bound on the relative variance lost to the past truncation.
    pub truncation_bound: f64,
}

impl NoisePath {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Locates `t` on the lattice of step `h`.
fn lattice_index(t: f64, h: f64) -> Option<i64> {
    let x = t / h;
    let n = x.round();
    ((x - n).abs() < 1e-7).then_some(n as i64)
}

enum Plan {
    /// All times on the lattice: FFT convolution on the uniform cells.
    Lattice {
        indices: Vec<i64>,
        conv: Convolver,
        out_len: usize,
        far: FarWeights,
    },
    /// Explicit weights for each time.
    Dense {
        uniform: Vec<Vec<f64>>,
        far: Vec<Vec<f64>>,
    },
}

/// Far-cell weights at interpolation knots (or at every time).
struct FarWeights {
    knots: Vec<f64>,
    weights: Vec<Vec<f64>>,
    exact_at_times: bool,
}

/// Precomputed synthesis of `G` at fixed times for one record layout.
/// Build once, apply to many records with the same layout.
pub struct Synthesizer {
    times: Vec<f64>,
    step: f64,
    past_cells: usize,
    far_edges: Vec<f64>,
    min_future_cells: usize,
    t_past: f64,
    truncation_bound: f64,
    plan: Plan,
}

impl Synthesizer {
    pub fn new(kernel: &KernelSpec, layout: &WienerRecord, times: &[f64], tol: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Empty("synthesis grid"));
        }
        let h = layout.step;
        let m = layout.past_cells;
        let t_min = times.iter().copied().fold(0.0, f64::min);
        let t_max = times.iter().copied().fold(0.0, f64::max);
        if t_min < -layout.uniform_past() - 1e-9 {
            return Err(Error::invalid(format!(
                "time {t_min} lies before the uniformly gridded past (-{})",
                layout.uniform_past()
            )));
        }
        if t_max > layout.horizon() + 1e-9 {
            return Err(Error::invalid(format!("time {t_max} beyond the record horizon {}", layout.horizon())));
        }
        let needed = required_past(kernel, t_min, t_max, tol)?;
        if layout.t_past() < needed * (1.0 - 1e-9) {
            return Err(Error::InsufficientPast {
                have: layout.t_past(),
                needed,
                tol,
            });
        }
        let trunc = truncation_bound(kernel, t_min, t_max, layout.t_past())?;
        let far_cells: Vec<(f64, f64)> = layout.far_edges.windows(2).map(|e| (-e[1], -e[0])).collect();
        let far_at = |t: f64| -> Vec<f64> {
            far_cells
                .iter()
                .map(|&(a, b)| kernel.shift_average(a, b, 0.0, t))
                .collect()
        };

        let lattice: Option<Vec<i64>> = times.iter().map(|&t| lattice_index(t, h)).collect();
        let n_max = (t_max / h).round() as i64;
        let l = (m as i64 + n_max.max(0)) as usize;
        let out_len = l.max(1);
        let fft_size = (2 * out_len).next_power_of_two() as f64;
        let dense_cost = times.len() as f64 * l as f64;
        let fft_cost = 10.0 * fft_size * fft_size.log2();
        let plan = match lattice {
            Some(indices) if dense_cost > fft_cost => {
                let table = LagTable::new(kernel, h, out_len);
                let conv = Convolver::new(table.weights, out_len);
                // distance between the synthesized window and the far cells
                let gap = m as f64 * h + t_min;
                let far = if gap >= 0.5 && times.len() > 64 {
                    let spacing = (gap / 16.0).min(0.25).max(h);
                    let count = ((t_max - t_min) / spacing).ceil() as usize + 1;
                    let knots: Vec<f64> = (0..=count + 2)
                        .map(|i| t_min + (i as f64 - 1.0) * spacing)
                        .collect();
                    let weights = knots.iter().map(|&t| far_at(t)).collect();
                    FarWeights {
                        knots,
                        weights,
                        exact_at_times: false,
                    }
                } else {
                    FarWeights {
                        knots: times.to_vec(),
                        weights: times.iter().map(|&t| far_at(t)).collect(),
                        exact_at_times: true,
                    }
                };
                Plan::Lattice {
                    indices,
                    conv,
                    out_len,
                    far,
                }
            }
            _ => {
                let uniform = times
                    .iter()
                    .map(|&t| {
                        (0..l)
                            .map(|i| {
                                let a = (i as f64 - m as f64) * h;
                                kernel.cell_average(a - t, a + h - t) - kernel.cell_average(a, a + h)
                            })
                            .collect()
                    })
                    .collect();
                let far = times.iter().map(|&t| far_at(t)).collect();
                Plan::Dense { uniform, far }
            }
        };
        Ok(Self {
            times: times.to_vec(),
            step: h,
            past_cells: m,
            far_edges: layout.far_edges.clone(),
            min_future_cells: n_max.max(0) as usize,
            t_past: layout.t_past(),
            truncation_bound: trunc,
            plan,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    fn check_layout(&self, rec: &WienerRecord) -> Result<()> {
        if rec.step != self.step
            || rec.past_cells != self.past_cells
            || rec.far_edges != self.far_edges
            || rec.future_cells() < self.min_future_cells
        {
            return Err(Error::invalid("record layout differs from the one the synthesizer was built for"));
        }
        Ok(())
    }

    /// One component of `G` at the synthesizer times.
    pub fn component(&self, rec: &WienerRecord, d: usize) -> Result<Vec<f64>> {
        self.check_layout(rec)?;
        let uni = &rec.uniform[d];
        let far_dw = &rec.far[d];
        let m = self.past_cells;
        let l = m + self.min_future_cells;
        let out = match &self.plan {
            Plan::Lattice {
                indices,
                conv,
                out_len,
                far,
            } => {
                let s = conv.apply(&uni[..l], *out_len);
                let at = |n: i64| -> f64 {
                    let idx = n + m as i64 - 1;
                    if idx < 0 {
                        0.0
                    } else {
                        s[idx as usize]
                    }
                };
                let s0 = at(0);
                let far_vals: Vec<f64> = far.weights.iter().map(|w| dot(w, far_dw)).collect();
                indices
                    .iter()
                    .zip(&self.times)
                    .enumerate()
                    .map(|(i, (&n, &t))| {
                        let f = if far.exact_at_times {
                            far_vals[i]
                        } else {
                            interpolate_cubic(&far.knots, &far_vals, t)
                        };
                        at(n) - s0 + f
                    })
                    .collect()
            }
            Plan::Dense { uniform, far } => uniform
                .iter()
                .zip(far)
                .map(|(wu, wf)| dot(wu, &uni[..l]) + dot(wf, far_dw))
                .collect(),
        };
        Ok(out)
    }

    pub fn synthesize(&self, rec: &WienerRecord) -> Result<NoisePath> {
        let values = (0..rec.dim()).map(|d| self.component(rec, d)).collect::<Result<_>>()?;
        Ok(NoisePath {
            times: self.times.clone(),
            values,
            seed: rec.seed,
            t_past: self.t_past,
            truncation_bound: self.truncation_bound,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Four-point Lagrange interpolation on uniformly spaced knots.
fn interpolate_cubic(knots: &[f64], vals: &[f64], t: f64) -> f64 {
    let s = knots[1] - knots[0];
    let x = (t - knots[0]) / s;
    let i = (x.floor() as i64 - 1).clamp(0, knots.len() as i64 - 4) as usize;
    let u = x - i as f64;
    let (y0, y1, y2, y3) = (vals[i], vals[i + 1], vals[i + 2], vals[i + 3]);
    let l0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
    let l1 = u * (u - 2.0) * (u - 3.0) / 2.0;
    let l2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
    let l3 = u * (u - 1.0) * (u - 2.0) / 6.0;
    y0 * l0 + y1 * l1 + y2 * l2 + y3 * l3
}

/// Synthesizes `G` on `grid` from `wiener`, checking that the record's past
/// is deep enough for [`DEFAULT_PAST_TOL`].
pub fn synthesize_noise(kernel: &KernelSpec, wiener: &WienerRecord, grid: &[f64]) -> Result<NoisePath> {
    Synthesizer::new(kernel, wiener, grid, DEFAULT_PAST_TOL)?.synthesize(wiener)
}

/// The lattice times `0, h, ..., T`.
pub fn lattice(step: f64, horizon: f64) -> Vec<f64> {
    let n = (horizon / step).round() as usize;
    (0..=n).map(|i| i as f64 * step).collect()
}

/// The split `G_{t+τ} - G_τ = remote + recent + innovation` on `[0, 1]`,
/// with the remote past ending at `θ` and the recent past covering
/// `[θ, τ]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseDecomposition {
    pub times: Vec<f64>,
    pub remote: Vec<f64>,
    pub recent: Vec<f64>,
    pub innovation: Vec<f64>,
    pub theta: f64,
    pub tau: f64,
    pub delta: f64,
}

impl NoiseDecomposition {
    pub fn total(&self) -> Vec<f64> {
        (0..self.times.len())
            .map(|i| self.remote[i] + self.recent[i] + self.innovation[i])
            .collect()
    }
}

/// Splits the noise after `τ` into remote past (cells before `θ`), recent
/// past (cells in `[θ, τ]`) and innovation (cells after `τ`), evaluated on
/// `times ⊂ [0, 1]` for component `d`. `θ`, `τ` and the times must lie on
/// the record lattice; `θ` may also sit on the uniform/geometric boundary or
/// below it.
pub fn decompose_noise(
    kernel: &KernelSpec,
    wiener: &WienerRecord,
    d: usize,
    theta: f64,
    tau: f64,
    times: &[f64],
) -> Result<NoiseDecomposition> {
    if theta > tau {
        return Err(Error::invalid(format!("theta = {theta} must not exceed tau = {tau}")));
    }
    let h = wiener.step;
    let m = wiener.past_cells as i64;
    let n_tau = lattice_index(tau, h).ok_or_else(|| Error::invalid("tau is not on the lattice"))?;
    let t_idx: Vec<i64> = times
        .iter()
        .map(|&t| lattice_index(t, h).ok_or_else(|| Error::invalid("decomposition times must be on the lattice")))
        .collect::<Result<_>>()?;
    let t_last = *t_idx.iter().max().ok_or(Error::Empty("times"))?;
    if n_tau + t_last > wiener.future_cells() as i64 {
        return Err(Error::invalid("record too short for the decomposition window"));
    }
    if theta < -wiener.t_past() {
        return Err(Error::invalid("theta lies beyond the recorded past"));
    }
    // θ either on the uniform lattice or in the geometric region
    let k_theta = match lattice_index(theta, h) {
        Some(k) if k >= -m => k,
        _ => -m,
    };
    let table = LagTable::new(kernel, h, (n_tau + t_last + m + 1).max(1) as usize);
    let uni = &wiener.uniform[d];
    let mut remote = vec![0.0; times.len()];
    let mut recent = vec![0.0; times.len()];
    let mut innovation = vec![0.0; times.len()];
    for (i, &nt) in t_idx.iter().enumerate() {
        let n = n_tau + nt;
        let mut rem = 0.0;
        let mut rec = 0.0;
        let mut inn = 0.0;
        for k in -m..n {
            let dw = uni[(k + m) as usize];
            if k >= n_tau {
                inn += table.at(n, k) * dw;
            } else {
                let w = table.at(n, k) - table.at(n_tau, k);
                if k >= k_theta {
                    rec += w * dw;
                } else {
                    rem += w * dw;
                }
            }
        }
        for (a, b, dw) in wiener.far_cells(d) {
            let w = kernel.shift_average(a, b, tau, times[i]);
            if b <= theta + 1e-12 {
                rem += w * dw;
            } else {
                rec += w * dw;
            }
        }
        remote[i] = rem;
        recent[i] = rec;
        innovation[i] = inn;
    }
    Ok(NoiseDecomposition {
        times: times.to_vec(),
        remote,
        recent,
        innovation,
        theta,
        tau,
        delta: tau - theta,
    })
}

/// Weighted sup norm `sup_s |w_s| / (1 + s)^β` of a path indexed by
/// `s >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HolderNorm {
    pub value: f64,
    /// False when `β <= 1/2`: the norm of a Wiener path is then infinite and
    /// the grid value only reflects the truncation.
    pub meaningful: bool,
}

pub fn weighted_holder_norm(s: &[f64], w: &[f64], beta: f64) -> HolderNorm {
    let meaningful = beta > 0.5;
    if !meaningful {
        log::warn!("weighted norm with beta = {beta} <= 1/2 diverges for Wiener paths; using the truncated grid");
    }
    let value = s
        .iter()
        .zip(w)
        .map(|(s, w)| w.abs() / (1.0 + s).powf(beta))
        .fold(0.0, f64::max);
    HolderNorm { value, meaningful }
}

/// Exact fractional Brownian motion `B_0, B_dt, ..., B_{n dt}` with
/// `Var(B_1) = 1`, by circulant embedding of the increments; falls back to
/// a Cholesky factorization when the embedding is not positive.
pub fn exact_fbm_oracle(hurst: f64, n: usize, dt: f64, seed: u64) -> Result<Vec<f64>> {
    crate::error::open_interval("H", hurst, 0.0, 1.0, "(0, 1)")?;
    if n == 0 || !(dt > 0.0) {
        return Err(Error::invalid("need n >= 1 and dt > 0"));
    }
    let gauss = |k: f64| 0.5 * ((k + 1.0).abs().powf(2.0 * hurst) - 2.0 * k.abs().powf(2.0 * hurst) + (k - 1.0).abs().powf(2.0 * hurst));
    let scale = dt.powf(hurst);
    let increments = match circulant_sample(n, &gauss, seed) {
        Some(x) => x,
        None => cholesky_sample(n, &gauss, seed)?,
    };
    let mut path = Vec::with_capacity(n + 1);
    let mut b = 0.0;
    path.push(0.0);
    for x in increments {
        b += x * scale;
        path.push(b);
    }
    Ok(path)
}

fn circulant_sample(n: usize, autocov: &dyn Fn(f64) -> f64, seed: u64) -> Option<Vec<f64>> {
    use rustfft::num_complex::Complex;
    let size = 2 * n;
    let mut c: Vec<Complex<f64>> = (0..size)
        .map(|k| {
            let lag = if k <= n { k } else { size - k };
            Complex::new(autocov(lag as f64), 0.0)
        })
        .collect();
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(size);
    fft.process(&mut c);
    let max = c.iter().map(|z| z.re).fold(0.0, f64::max);
    if c.iter().any(|z| z.re < -1e-10 * max) {
        return None;
    }
    let z1 = NormalStream::new(seed, "fbm-re", 0).take(0, size);
    let z2 = NormalStream::new(seed, "fbm-im", 0).take(0, size);
    let mut y: Vec<Complex<f64>> = c
        .iter()
        .enumerate()
        .map(|(k, lam)| {
            let s = (lam.re.max(0.0) / size as f64).sqrt();
            Complex::new(s * z1[k], s * z2[k])
        })
        .collect();
    fft.process(&mut y);
    Some(y[..n].iter().map(|z| z.re).collect())
}

fn cholesky_sample(n: usize, autocov: &dyn Fn(f64) -> f64, seed: u64) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = autocov(i as f64 - j as f64);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::invalid("covariance matrix is not positive definite"));
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let z = NormalStream::new(seed, "fbm-chol", 0).take(0, n);
    Ok((0..n).map(|i| (0..=i).map(|k| l[i * n + k] * z[k]).sum()).collect())
}

/// Innovation process `Z_t = ∫_0^t g(u - t) dW_u` on the lattice of `[0, T]`.
pub fn innovation_path(kernel: &KernelSpec, increments: &[f64], table: &LagTable) -> Vec<f64> {
    let n = increments.len();
    let mut z = Vec::with_capacity(n + 1);
    z.push(0.0);
    for t in 1..=n as i64 {
        z.push((0..t).map(|k| table.at(t, k) * increments[k as usize]).sum());
    }
    let _ = kernel;
    z
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallBallEstimate {
    pub probability: Interval,
    pub hits: usize,
    pub paths: usize,
    pub epsilon: f64,
}

/// Fraction of innovation paths on `[0, 1]` whose grid sup norm stays
/// below `epsilon`, with a 95% Wilson interval.
pub fn small_ball_estimate(kernel: &KernelSpec, epsilon: f64, n_paths: usize, step: f64, seed: u64) -> Result<SmallBallEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain { name: "epsilon", value: epsilon, range: "(0, inf)" });
    }
    if n_paths == 0 {
        return Err(Error::Empty("n_paths"));
    }
    let cells = (1.0 / step).round() as usize;
    let table = LagTable::new(kernel, step, cells + 1);
    let conv = Convolver::new(table.weights.clone(), cells);
    let sq = step.sqrt();
    let hits: usize = crate::par::map(n_paths, |p| {
        let mut dw = NormalStream::new(seed, "small-ball", p as u64).take(0, cells);
        dw.iter_mut().for_each(|x| *x *= sq);
        let z = conv.apply(&dw, cells);
        usize::from(z.iter().all(|v| v.abs() <= epsilon))
    })
    .into_iter()
    .sum();
    Ok(SmallBallEstimate {
        probability: stats::wilson(hits, n_paths, 0.95),
        hits,
        paths: n_paths,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_half_steps() {
        let w = sample_wiener(0.0, 1.0, 0.5, 9).unwrap();
        assert_eq!(w.future_cells(), 2);
        assert_eq!(w.past_cells(), 0);
        assert!(sample_wiener(0.0, 1.0, 2.0, 9).is_err());
    }

    #[test]
    fn extension_preserves_existing_cells() {
        let mut w = sample_wiener(3.0, 1.0, 0.01, 5).unwrap();
        let before = w.future_increments(0).to_vec();
        w.extend_to(2.5);
        assert_eq!(w.future_cells(), 250);
        assert_eq!(&w.future_increments(0)[..100], &before[..]);
        let direct = sample_wiener(3.0, 2.5, 0.01, 5).unwrap();
        assert_eq!(direct.future_increments(0), w.future_increments(0));
    }

    #[test]
    fn path_is_pinned_at_zero_and_sums_increments() {
        let w = sample_wiener(50.0, 1.0, 0.1, 2).unwrap();
        let (t, v) = w.path(0);
        let i0 = t.iter().position(|&x| x.abs() < 1e-12).unwrap();
        assert_eq!(v[i0], 0.0);
        let end: f64 = w.future_increments(0).iter().sum();
        assert!((v.last().unwrap() - end).abs() < 1e-12);
        assert!(t.windows(2).all(|p| p[1] > p[0]));
        assert!((t[0] + 50.0).abs() < 1e-9);
    }

    #[test]
    fn cubic_interpolation_is_exact_on_cubics() {
        let knots: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let f = |x: f64| 1.0 - x + 0.5 * x * x - 0.1 * x * x * x;
        let vals: Vec<f64> = knots.iter().map(|&x| f(x)).collect();
        for t in [0.1, 1.3, 3.9, 4.4] {
            assert!((interpolate_cubic(&knots, &vals, t) - f(t)).abs() < 1e-12);
        }
    }
}
