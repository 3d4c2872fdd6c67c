//! Config-driven runner around `prox_admm`: parses an experiment file,
//! checks the parameter condition, runs the engine and writes `trace.csv`
//! plus a `key=value` summary.

pub mod config;
pub mod runner;

pub use config::{parse_config, ConfigError, ExperimentConfig, InstanceKind};
pub use runner::{execute, run_experiment, CliError, Outcome, TRACE_HEADER};
