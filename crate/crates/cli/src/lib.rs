//! Configuration, orchestration and output for the `multibec` binary.

pub mod check;
pub mod config;
pub mod output;
pub mod runner;

pub use config::{parse_config, parse_str, ConfigError, Overrides, RunConfig};
pub use runner::{compare, solve, RunError, RunOutcome};
