//! Experiment plumbing behind the command-line tool: configuration, multi-seed
//! runs and curve aggregation.

pub mod aggregate;
pub mod config;
pub mod run;

pub use aggregate::{aggregate, AggregateError};
pub use config::{preset, ConfigError, ExperimentConfig, Overrides};
pub use run::{run, RunError, Summary};
