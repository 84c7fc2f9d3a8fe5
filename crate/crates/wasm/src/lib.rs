//! WebAssembly bindings for the page in `www/`.
//!
//! Every export returns a JSON string so the page can stay plain
//! JavaScript. The `*_json` functions are ordinary Rust and carry the logic;
//! the exported wrappers only turn errors into exceptions.

use fracergo::coalescence::run_sticking_pair;
use fracergo::dynamics::{make_flatbottom_drift, Sigma};
use fracergo::kernels::KernelSpec;
use fracergo::noise::{lattice, synthesize_noise, RecordSpec, WienerRecord, DEFAULT_PAST_TOL};
use fracergo::rng::replica_seed;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest path the page may request, in grid points.
pub const MAX_POINTS: usize = 20_000;

#[derive(Serialize)]
struct PathView {
    times: Vec<f64>,
    values: Vec<f64>,
    t_past: f64,
    truncation_bound: f64,
}

#[derive(Serialize)]
struct PairView {
    times: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    gap: Vec<f64>,
    coalescence_time: Option<f64>,
    psi_l2: Option<f64>,
}

#[derive(Serialize)]
struct KernelView {
    alpha: f64,
    zeta: f64,
    c1: f64,
    c2: f64,
    lags: Vec<f64>,
    increment_variance: Vec<f64>,
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn check_grid(horizon: f64, step: f64) -> Result<(), String> {
    if !(horizon > 0.0 && step > 0.0 && step <= horizon) {
        return Err(format!("need 0 < step <= horizon, got step {step}, horizon {horizon}"));
    }
    if horizon / step > MAX_POINTS as f64 {
        return Err(format!("at most {MAX_POINTS} points per path"));
    }
    Ok(())
}

/// One path of the fractional noise with Hurst index `hurst` on `[0, horizon]`.
pub fn fbm_path_json(hurst: f64, horizon: f64, step: f64, seed: u64) -> Result<String, String> {
    check_grid(horizon, step)?;
    let kernel = KernelSpec::fractional(hurst).map_err(|e| e.to_string())?;
    let spec = RecordSpec::for_window(&kernel, 0.0, horizon, step, 1, DEFAULT_PAST_TOL).map_err(|e| e.to_string())?;
    let rec = WienerRecord::sample(&spec, replica_seed(seed, "demo-path", 0)).map_err(|e| e.to_string())?;
    let mut path = synthesize_noise(&kernel, &rec, &lattice(step, horizon)).map_err(|e| e.to_string())?;
    to_json(&PathView {
        times: path.times,
        values: path.values.swap_remove(0),
        t_past: path.t_past,
        truncation_bound: path.truncation_bound,
    })
}

/// Drives a pair from `x0` and `y0` with the same noise plus the sticking
/// control, under a flat-bottom drift.
pub fn sticking_pair_json(hurst: f64, x0: f64, y0: f64, beta: f64, seed: u64) -> Result<String, String> {
    let (horizon, step) = (2.0, 0.005);
    let kernel = KernelSpec::fractional(hurst).map_err(|e| e.to_string())?;
    let drift = make_flatbottom_drift(1.0, 1.0, 1).map_err(|e| e.to_string())?;
    let sigma = Sigma::scalar(1.0, 1).map_err(|e| e.to_string())?;
    let spec = RecordSpec::for_window(&kernel, 0.0, horizon, step, 1, DEFAULT_PAST_TOL).map_err(|e| e.to_string())?;
    let rec = WienerRecord::sample(&spec, replica_seed(seed, "demo-pair", 0)).map_err(|e| e.to_string())?;
    let noise = synthesize_noise(&kernel, &rec, &lattice(step, horizon)).map_err(|e| e.to_string())?;
    let (pair, plan) =
        run_sticking_pair(&drift, &sigma, &kernel, &[x0], &[y0], beta, &noise).map_err(|e| e.to_string())?;
    to_json(&PairView {
        x: pair.x.component(0),
        y: pair.y.component(0),
        times: pair.times,
        gap: pair.gap,
        coalescence_time: plan.coalescence_time,
        psi_l2: plan.psi_l2(),
    })
}

/// Regularity constants of the fractional kernel and its increment
/// variance at a few lags.
pub fn kernel_summary_json(hurst: f64) -> Result<String, String> {
    let kernel = KernelSpec::fractional(hurst).map_err(|e| e.to_string())?;
    let cert = kernel.certificate();
    let lags = vec![0.25, 0.5, 1.0, 2.0, 4.0];
    let increment_variance = lags
        .iter()
        .map(|&t| kernel.increment_variance(t))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    to_json(&KernelView {
        alpha: cert.alpha,
        zeta: cert.zeta,
        c1: cert.c1,
        c2: cert.c2,
        lags,
        increment_variance,
    })
}

#[wasm_bindgen]
pub fn fbm_path(hurst: f64, horizon: f64, step: f64, seed: u32) -> Result<String, JsError> {
    fbm_path_json(hurst, horizon, step, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn sticking_pair(hurst: f64, x0: f64, y0: f64, beta: f64, seed: u32) -> Result<String, JsError> {
    sticking_pair_json(hurst, x0, y0, beta, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn kernel_summary(hurst: f64) -> Result<String, JsError> {
    kernel_summary_json(hurst).map_err(|e| JsError::new(&e))
}
