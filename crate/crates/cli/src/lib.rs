//! Experiment front-end: config ingestion, run orchestration and artifacts.

pub mod config;
pub mod experiment;
pub mod svg;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, run_mixing, run_study, run_verify, ExperimentError, RunSummary};
