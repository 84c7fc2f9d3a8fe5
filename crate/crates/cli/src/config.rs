use std::num::NonZeroUsize;
use std::path::PathBuf;

use fracergo::dynamics::{DriftChoice, DriftSpec, Sigma};
use fracergo::kernels::{KernelChoice, KernelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    VerifyKernel,
    VerifyDrift,
    Decay,
    Rates,
    Schedule,
    Contraction,
    Coalesce,
    Tv,
    LaplaceCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::VerifyKernel => "verify-kernel",
            Experiment::VerifyDrift => "verify-drift",
            Experiment::Decay => "decay",
            Experiment::Rates => "rates",
            Experiment::Schedule => "schedule",
            Experiment::Contraction => "contraction",
            Experiment::Coalesce => "coalesce",
            Experiment::Tv => "tv",
            Experiment::LaplaceCheck => "laplace-check",
        }
    }
}

/// Optional experiment-specific parameters; every one has a default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_burn: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

fn default_drift() -> DriftChoice {
    DriftChoice::Flatbottom { radius: 1.0, kappa: 1.0 }
}

fn default_horizon() -> f64 {
    10.0
}

fn default_step() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub kernel: KernelChoice,
    #[serde(default = "default_drift")]
    pub drift: DriftChoice,
    /// Diagonal of `σ`; its length sets the dimension. Defaults to `[1]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Sigma>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    pub replicas: NonZeroUsize,
    pub seed: u64,
    /// Moment parameter of the initial law, used only to report the
    /// theoretical rate exponent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<f64>,
    pub output: PathBuf,
    #[serde(default)]
    pub params: Params,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

/// Parses and validates a configuration. Nothing is computed before this
/// succeeds.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(&path, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

impl ExperimentConfig {
    pub fn dim(&self) -> usize {
        self.sigma.as_ref().map_or(1, |s| s.dim())
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma.clone().unwrap_or_else(|| Sigma::scalar(1.0, 1).expect("unit sigma"))
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        KernelSpec::from_choice(self.kernel).expect("validated kernel")
    }

    pub fn drift_spec(&self) -> DriftSpec {
        DriftSpec::from_choice(&self.drift, self.dim()).expect("validated drift")
    }

    pub fn replicas(&self) -> usize {
        self.replicas.get()
    }

    /// Starting point of the first leg, `[2, ..., 2]` unless given
    /// (`[0, ..., 0]` for the sticking experiments).
    pub fn x0(&self) -> Vec<f64> {
        let fill = match self.experiment {
            Experiment::Coalesce => 0.0,
            _ => 2.0,
        };
        self.params.x0.clone().unwrap_or_else(|| vec![fill; self.dim()])
    }

    /// Starting point of the second leg, `x0 + e_1` unless given.
    pub fn y0(&self) -> Vec<f64> {
        self.params.y0.clone().unwrap_or_else(|| {
            let mut y = self.x0();
            y[0] += 1.0;
            y
        })
    }

    pub fn t_burn(&self) -> f64 {
        let t = self
            .params
            .t_burn
            .unwrap_or_else(|| fracergo::dynamics::default_burn_in(&self.kernel_spec()));
        (t / self.step).round() * self.step
    }

    pub fn beta(&self) -> f64 {
        self.params.beta.unwrap_or(fracergo::coalescence::DEFAULT_BETA)
    }

    pub fn k_max(&self) -> usize {
        self.params.k_max.unwrap_or(6)
    }

    pub fn p(&self) -> f64 {
        self.params.p.unwrap_or(2.0)
    }

    /// Canonical JSON of the configuration, defaults included.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.canonical().as_bytes()))
    }

    fn validate(&self) -> Result<(), ConfigError> {
        KernelSpec::from_choice(self.kernel).map_err(|e| schema("kernel", e.to_string()))?;
        DriftSpec::from_choice(&self.drift, self.dim()).map_err(|e| schema("drift", e.to_string()))?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(schema("horizon", "must be positive"));
        }
        if !(self.step > 0.0 && self.step <= self.horizon.min(1.0)) {
            return Err(schema("step", "must lie in (0, min(1, horizon)]"));
        }
        let per_unit = 1.0 / self.step;
        if (per_unit - per_unit.round()).abs() > 1e-6 {
            return Err(schema("step", "must divide 1"));
        }
        if let Some(u) = self.upsilon {
            if u.is_nan() || u <= 0.0 {
                return Err(schema("upsilon", "must be positive (use a large value for all moments)"));
            }
        }
        let dim = self.dim();
        for (name, v) in [("params.x0", &self.params.x0), ("params.y0", &self.params.y0)] {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(schema(name, format!("has {} entries, sigma has {dim}", v.len())));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(schema(name, "entries must be finite"));
                }
            }
        }
        if let Some(t) = self.params.t_burn {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(schema("params.t_burn", "must be nonnegative"));
            }
        }
        if let Some(b) = self.params.beta {
            if !(b > 0.0 && b < 0.5) {
                return Err(schema("params.beta", "must lie in (0, 1/2)"));
            }
        }
        if let Some(e) = self.params.epsilon {
            let limit = self.kernel_spec().alpha() + 0.5;
            if !(e > 0.0 && e < limit) {
                return Err(schema("params.epsilon", format!("must lie in (0, {limit})")));
            }
        }
        if self.params.k_max == Some(0) {
            return Err(schema("params.k_max", "must be positive"));
        }
        for (name, v) in [("params.p", self.params.p), ("params.k_bound", self.params.k_bound), ("params.radius", self.params.radius)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(schema(name, "must be positive"));
                }
            }
        }
        let fractional = self.kernel_spec().hurst().is_some();
        match self.experiment {
            Experiment::Coalesce | Experiment::Tv | Experiment::LaplaceCheck if !fractional => {
                return Err(schema("kernel.family", format!("{} needs the fractional family", self.experiment.name())));
            }
            Experiment::Tv if self.horizon < 1.0 => return Err(schema("horizon", "tv needs horizon >= 1")),
            Experiment::Coalesce | Experiment::Tv if self.sigma().as_scalar().is_none() => {
                return Err(schema("sigma", "sticking experiments need equal sigma entries"));
            }
            Experiment::Coalesce if self.x0() == self.y0() => {
                return Err(schema("params.y0", "must differ from x0"));
            }
            _ => {}
        }
        Ok(())
    }
}
