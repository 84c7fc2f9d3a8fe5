//! Experiment runner for the `fracergo` library: JSON configurations, the
//! experiment registry, and deterministic artifact output.

pub mod config;
pub mod registry;
pub mod run;

pub use config::{load_config, parse_config, ConfigError, Experiment, ExperimentConfig};
pub use registry::list_experiments;
pub use run::{plan_summary, run_experiment, write_artifacts, Artifact, Outcome, RunError};
