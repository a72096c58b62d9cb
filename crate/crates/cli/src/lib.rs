//! Configuration parsing and experiment orchestration behind the `flab` binary.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig, ModelSpec};
pub use run::{execute, run_to_dir, Outcome, RunError};
