//! Experiment driver behind the `heisen` binary.

pub mod config;
pub mod experiment;
pub mod output;

pub use config::{load_config, load_config_with, parse_config, ConfigError, ExperimentConfig, Format, Overrides, RunKind};
pub use experiment::{run_experiment, Outcome, RunError};
pub use output::{Cell, Table};

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "HEISEN_THREADS";

/// Exit code when a `validate` run misses a threshold.
pub const EXIT_DEFECT: i32 = 4;
