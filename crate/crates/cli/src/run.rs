use std::fmt::Write as _;
use std::path::Path;

use fracergo::coalescence::{run_sticking_pair, sticking_girsanov, two_stage_tv_estimate};
use fracergo::coupling::{
    build_stopping_schedule, check_memory_condition, contraction_probe, default_epsilon, memory_profile,
    schedule_record_spec, stepwise_decay_probe, tail_check,
};
use fracergo::dynamics::{certify, verify_c1};
use fracergo::kernels::{increment_square_integrability, laplace_conjugate_check, normalized_fractional_conjugate, verify_c2, C2Grid};
use fracergo::metrics::{decay_curve, fit_subexponential, gamma_bootstrap, gamma_exponent, DecayCurve, X0Law};
use fracergo::noise::{lattice, synthesize_noise, RecordSpec, WienerRecord, DEFAULT_PAST_TOL};
use fracergo::rng::replica_seed;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Experiment, ExperimentConfig};
use crate::registry::section_of;

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, s: String) -> Self {
        Self {
            name: name.into(),
            bytes: s.into_bytes(),
        }
    }

    fn json<T: Serialize>(name: &str, value: &T) -> Self {
        let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
        s.push('\n');
        Self::text(name, s)
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(&self.bytes))
    }
}

/// What an experiment produced. `failure` is set when a verification ran
/// to completion but did not pass; the artifacts are still written.
#[derive(Debug)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub failure: Option<String>,
}

impl Outcome {
    fn ok(artifacts: Vec<Artifact>) -> Self {
        Self { artifacts, failure: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Library(#[from] fracergo::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// The JSON error report printed on failure.
    pub fn report(&self, cfg: &ExperimentConfig) -> Value {
        let kind = match self {
            RunError::Library(e) => e.kind(),
            RunError::Io { .. } => "io",
        };
        json!({
            "status": "error",
            "experiment": cfg.experiment.name(),
            "kind": kind,
            "message": self.to_string(),
        })
    }
}

type Result<T> = std::result::Result<T, RunError>;

/// Times at which decay curves are sampled: 40 lattice points up to the
/// horizon.
fn decay_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut t: Vec<f64> = (1..=40)
        .map(|i| (cfg.horizon * i as f64 / 40.0 / cfg.step).round() * cfg.step)
        .filter(|&t| t > 0.0)
        .collect();
    t.dedup();
    t
}

fn curve(cfg: &ExperimentConfig) -> Result<DecayCurve> {
    Ok(decay_curve(
        &cfg.drift_spec(),
        &cfg.sigma(),
        &cfg.kernel_spec(),
        &X0Law::Point(cfg.x0()),
        &decay_grid(cfg),
        cfg.t_burn(),
        cfg.step,
        cfg.replicas(),
        cfg.seed,
    )?)
}

fn epsilon(cfg: &ExperimentConfig) -> f64 {
    cfg.params.epsilon.unwrap_or_else(|| default_epsilon(&cfg.kernel_spec()))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let kernel = cfg.kernel_spec();
    let sigma = cfg.sigma();
    let n = cfg.replicas();
    match cfg.experiment {
        Experiment::VerifyKernel => {
            let report = verify_c2(&kernel, &C2Grid::default());
            let ts = [0.5, 1.0, 2.0];
            let variances = increment_square_integrability(&kernel, &ts)?;
            let finite = variances.iter().all(|(_, v)| v.is_finite());
            let pass = report.pass && finite;
            let doc = json!({
                "pass": pass,
                "regularity": report,
                "increment_variance": variances.iter().map(|(t, v)| json!({"t": t, "variance": v})).collect::<Vec<_>>(),
            });
            Ok(Outcome {
                artifacts: vec![Artifact::json("certificate.json", &doc)],
                failure: (!pass).then(|| "kernel bounds not certified".to_string()),
            })
        }
        Experiment::VerifyDrift => {
            let drift = cfg.drift_spec();
            let cert = verify_c1(&drift, n, cfg.params.radius.unwrap_or(5.0), cfg.seed)?;
            Ok(Outcome::ok(vec![Artifact::json("drift_certificate.json", &cert)]))
        }
        Experiment::Decay => Ok(Outcome::ok(vec![Artifact::text("decay.csv", curve(cfg)?.to_csv())])),
        Experiment::Rates => {
            let c = curve(cfg)?;
            let window = c.auto_window();
            let fit = fit_subexponential(&c, Some(window))?;
            let ci = gamma_bootstrap(&c, window, 200, cfg.seed)?;
            let eps = epsilon(cfg);
            let theory = cfg.upsilon.map(|u| gamma_exponent(kernel.alpha(), eps, u)).transpose()?;
            let doc = json!({
                "gamma_hat": fit.gamma_hat,
                "c_hat": fit.c_hat,
                "r2": fit.r2,
                "window": [window.0, window.1],
                "H": kernel.hurst(),
                "drift": cfg.drift_spec().name(),
                "kernel": kernel.label(),
                "gamma_ci": [ci.lo, ci.hi],
                "epsilon": eps,
                "gamma_theory": theory,
            });
            Ok(Outcome::ok(vec![
                Artifact::text("decay.csv", c.to_csv()),
                Artifact::json("rates.json", &doc),
            ]))
        }
        Experiment::Schedule => {
            let eps = epsilon(cfg);
            let k_max = cfg.k_max();
            let spec = schedule_record_spec(&kernel, k_max, cfg.step, cfg.dim())?;
            let runs: Vec<_> = (0..n)
                .into_par_iter()
                .map(|j| -> fracergo::Result<_> {
                    let mut rec = WienerRecord::sample(&spec, replica_seed(cfg.seed, "schedule", j as u64))?;
                    let s = build_stopping_schedule(&kernel, &mut rec, eps, k_max)?;
                    let m = memory_profile(&s, &kernel, &rec, 50)?;
                    Ok((s, m))
                })
                .collect::<fracergo::Result<_>>()?;
            let (schedules, profiles): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
            let memory = check_memory_condition(&profiles, None, 0.0)?;
            let mut csv = String::from("replica,k,tau,delta,s_value,memory_sup,recent_ok\n");
            for (j, (s, m)) in schedules.iter().zip(&profiles).enumerate() {
                for k in 1..=k_max {
                    let _ = writeln!(
                        csv,
                        "{j},{k},{},{},{},{},{}",
                        s.taus[k],
                        s.deltas[k - 1],
                        s.s_values[k - 1],
                        m.remote_sup[k - 1],
                        m.recent_sup[k - 1] <= memory.k_threshold
                    );
                }
            }
            let mean_tau: Vec<f64> = (0..=k_max)
                .map(|k| schedules.iter().map(|s| s.taus[k]).sum::<f64>() / n as f64)
                .collect();
            let doc = json!({
                "epsilon": eps,
                "k_max": k_max,
                "mean_tau": mean_tau,
                "memory": memory,
                "tail": [tail_check(&schedules, 1.0)?, tail_check(&schedules, 2.0)?],
            });
            Ok(Outcome::ok(vec![
                Artifact::text("schedule.csv", csv),
                Artifact::json("schedule.json", &doc),
            ]))
        }
        Experiment::Contraction => {
            let mut drift = cfg.drift_spec();
            let cert = certify(&mut drift, 4000, cfg.params.radius.unwrap_or(6.0), cfg.seed)?;
            let pts: Vec<f64> = (0..7).map(|i| -3.0 + i as f64).collect();
            let axis = |v: f64| {
                let mut x = vec![0.0; cfg.dim()];
                x[0] = v;
                x
            };
            let mut pairs = Vec::new();
            for (i, &a) in pts.iter().enumerate() {
                for &b in &pts[i + 1..] {
                    pairs.push((axis(a), axis(b)));
                }
            }
            let k_bound = cfg.params.k_bound.unwrap_or(3.0);
            let probe = contraction_probe(&drift, &sigma, &kernel, k_bound, cfg.p(), &pairs, n, cfg.step, cfg.seed)?;
            let steps = stepwise_decay_probe(
                &drift,
                &sigma,
                &kernel,
                epsilon(cfg),
                cfg.k_max(),
                cfg.p(),
                &cfg.x0(),
                &cfg.y0(),
                n,
                cfg.step,
                cfg.seed,
            )?;
            let pass = steps.fitted_ratio < 1.0;
            let doc = json!({"certificate": cert, "probe": probe, "stepwise": steps});
            Ok(Outcome {
                artifacts: vec![Artifact::json("contraction.json", &doc)],
                failure: (!pass).then(|| "step-wise moments do not decay".to_string()),
            })
        }
        Experiment::Coalesce => {
            let drift = cfg.drift_spec();
            let horizon = cfg.horizon.max(1.0);
            let spec = RecordSpec::for_window(&kernel, 0.0, horizon, cfg.step, cfg.dim(), DEFAULT_PAST_TOL)?;
            let rec = WienerRecord::sample(&spec, replica_seed(cfg.seed, "coalesce", 0))?;
            let g = synthesize_noise(&kernel, &rec, &lattice(cfg.step, horizon))?;
            let (x, y) = (cfg.x0(), cfg.y0());
            let (pair, plan) = run_sticking_pair(&drift, &sigma, &kernel, &x, &y, cfg.beta(), &g)?;
            let rep = sticking_girsanov(&drift, &sigma, &kernel, &x, &y, cfg.beta(), cfg.step, n, cfg.seed)?;
            let doc = json!({
                "l2_psi": rep.l2_psi,
                "tv_bound": rep.tv_plus.estimate,
                "ci": [rep.tv_plus.lo, rep.tv_plus.hi],
                "e_d": rep.e_d.estimate,
                "mean_abs_density_gap": rep.tv_bound.estimate,
                "trivial": rep.trivial,
                "draws": rep.draws,
                "coalescence_time": plan.coalescence_time,
                "phi_sup": plan.phi_sup(),
            });
            Ok(Outcome::ok(vec![
                Artifact::text("coalesce.csv", plan.to_csv(&pair.gap)),
                Artifact::json("girsanov.json", &doc),
            ]))
        }
        Experiment::Tv => {
            let est = two_stage_tv_estimate(
                &cfg.drift_spec(),
                &sigma,
                &kernel,
                &cfg.x0(),
                cfg.t_burn(),
                cfg.horizon,
                None,
                cfg.beta(),
                cfg.step,
                n,
                cfg.seed,
            )?;
            Ok(Outcome::ok(vec![Artifact::json("tv.json", &est)]))
        }
        Experiment::LaplaceCheck => {
            let h = kernel.hurst().expect("validated fractional kernel");
            let points = n.max(2);
            let grid: Vec<f64> = (0..points)
                .map(|i| 0.1 * 100f64.powf(i as f64 / (points - 1) as f64))
                .collect();
            let conj = normalized_fractional_conjugate(h);
            let report = laplace_conjugate_check(&kernel, &conj, &grid)?;
            let pass = report.max_error < 1e-3;
            Ok(Outcome {
                failure: (!pass).then(|| format!("Laplace identity error {:e}", report.max_error)),
                artifacts: vec![Artifact::json("laplace.json", &json!({"pass": pass, "report": report}))],
            })
        }
    }
}

/// Writes the artifacts and `manifest.json` into the output directory.
pub fn write_artifacts(cfg: &ExperimentConfig, artifacts: &[Artifact]) -> Result<Value> {
    let dir = &cfg.output;
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| RunError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for a in artifacts {
        let path = dir.join(&a.name);
        std::fs::write(&path, &a.bytes).map_err(io(&path))?;
    }
    let config: Value = serde_json::from_str(&cfg.canonical()).expect("canonical config is JSON");
    let manifest = json!({
        "experiment": cfg.experiment.name(),
        "section": section_of(cfg.experiment),
        "library": "fracergo",
        "version": fracergo::VERSION,
        "seed": cfg.seed,
        "config_sha256": cfg.sha256(),
        "config": config,
        "artifacts": artifacts
            .iter()
            .map(|a| json!({"file": a.name, "sha256": a.sha256(), "bytes": a.bytes.len()}))
            .collect::<Vec<_>>(),
    });
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(io(&path))?;
    Ok(manifest)
}

/// Stream labels under which each experiment derives replica seeds.
fn stream_labels(e: Experiment) -> &'static [&'static str] {
    match e {
        Experiment::VerifyKernel | Experiment::LaplaceCheck => &[],
        Experiment::VerifyDrift => &["verify-c1"],
        Experiment::Decay | Experiment::Rates => &["decay"],
        Experiment::Schedule => &["schedule"],
        Experiment::Contraction => &["perturbation", "stepwise"],
        Experiment::Coalesce => &["coalesce", "sticking-girsanov"],
        Experiment::Tv => &["two-stage"],
    }
}

fn artifact_names(e: Experiment) -> &'static [&'static str] {
    match e {
        Experiment::VerifyKernel => &["certificate.json"],
        Experiment::VerifyDrift => &["drift_certificate.json"],
        Experiment::Decay => &["decay.csv"],
        Experiment::Rates => &["decay.csv", "rates.json"],
        Experiment::Schedule => &["schedule.csv", "schedule.json"],
        Experiment::Contraction => &["contraction.json"],
        Experiment::Coalesce => &["coalesce.csv", "girsanov.json"],
        Experiment::Tv => &["tv.json"],
        Experiment::LaplaceCheck => &["laplace.json"],
    }
}

/// The replica and seed layout of a run, without computing anything.
pub fn plan_summary(cfg: &ExperimentConfig, threads: usize) -> String {
    let kernel = cfg.kernel_spec();
    let n = cfg.replicas();
    let mut s = String::new();
    let _ = writeln!(s, "experiment   {} ({})", cfg.experiment.name(), section_of(cfg.experiment));
    let _ = writeln!(s, "config       sha256 {}", cfg.sha256());
    let _ = writeln!(s, "kernel       {}", kernel.label());
    let _ = writeln!(s, "drift        {} in dimension {}", cfg.drift_spec().name(), cfg.dim());
    let _ = writeln!(s, "grid         step {} horizon {}", cfg.step, cfg.horizon);
    if matches!(cfg.experiment, Experiment::Decay | Experiment::Rates | Experiment::Tv) {
        let t_burn = cfg.t_burn();
        let _ = writeln!(s, "burn-in      {t_burn}");
        if let Ok(spec) = RecordSpec::for_window(&kernel, -t_burn, cfg.horizon, cfg.step, cfg.dim(), DEFAULT_PAST_TOL) {
            let _ = writeln!(s, "record       uniform past {} total past {:.4e}", spec.uniform_past, spec.t_past);
        }
    }
    let _ = writeln!(s, "replicas     {n} on {threads} thread(s), master seed {}", cfg.seed);
    for label in stream_labels(cfg.experiment) {
        let show: Vec<usize> = if n <= 4 { (0..n).collect() } else { vec![0, 1, 2, n - 1] };
        let seeds: Vec<String> = show
            .iter()
            .map(|&j| format!("{j}:{:016x}", replica_seed(cfg.seed, label, j as u64)))
            .collect();
        let _ = writeln!(s, "seeds        \"{label}\" {}", seeds.join(" "));
    }
    let _ = writeln!(
        s,
        "artifacts    {} + manifest.json in {}",
        artifact_names(cfg.experiment).join(", "),
        cfg.output.display()
    );
    s
}
