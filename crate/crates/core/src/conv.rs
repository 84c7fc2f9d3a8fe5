//! Causal convolution against a fixed weight sequence, through the FFT when
//! the sizes make that worthwhile.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Computes `y[n] = Σ_{i <= n} w[n - i] x[i]` for `n < out_len`.
pub(crate) struct Convolver {
    weights: Vec<f64>,
    max_len: usize,
    fft: Option<FftPlan>,
}

struct FftPlan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    weights_hat: Vec<Complex<f64>>,
}

impl Convolver {
    /// `max_len` bounds both the signal length and the number of outputs.
    pub fn new(weights: Vec<f64>, max_len: usize) -> Self {
        let direct_cost = (max_len as f64) * (max_len as f64) / 2.0;
        let size = (2 * max_len).next_power_of_two();
        let fft_cost = 6.0 * size as f64 * (size as f64).log2();
        let fft = (direct_cost > fft_cost).then(|| {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut weights_hat = vec![Complex::new(0.0, 0.0); size];
            for (slot, &w) in weights_hat.iter_mut().zip(weights.iter().take(max_len)) {
                slot.re = w;
            }
            forward.process(&mut weights_hat);
            FftPlan {
                size,
                forward,
                inverse,
                weights_hat,
            }
        });
        Self { weights, max_len, fft }
    }

    pub fn apply(&self, signal: &[f64], out_len: usize) -> Vec<f64> {
        assert!(out_len <= self.weights.len(), "convolution weights too short");
        match &self.fft {
            Some(plan) if signal.len() <= self.max_len && out_len <= self.max_len => plan.apply(signal, out_len),
            _ => self.direct(signal, out_len),
        }
    }

    fn direct(&self, signal: &[f64], out_len: usize) -> Vec<f64> {
        (0..out_len)
            .map(|n| {
                let top = n.min(signal.len().saturating_sub(1));
                if signal.is_empty() {
                    return 0.0;
                }
                (0..=top).map(|i| self.weights[n - i] * signal[i]).sum()
            })
            .collect()
    }
}

impl FftPlan {
    fn apply(&self, signal: &[f64], out_len: usize) -> Vec<f64> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (slot, &x) in buf.iter_mut().zip(signal) {
            slot.re = x;
        }
        self.forward.process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.weights_hat) {
            *b *= *w;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf[..out_len].iter().map(|c| c.re * scale).collect()
    }
}
