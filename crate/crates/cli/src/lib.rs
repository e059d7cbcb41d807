//! Configuration and sweep driver behind the `hetnet` binary.

pub mod config;
pub mod experiment;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Overrides};
pub use experiment::{run_experiment, write_outputs, Report};
