//! Batch front-end for the verification campaigns: configuration parsing,
//! campaign dispatch and deterministic report emission.

pub mod config;
pub mod report;
pub mod run;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use report::{Report, Table};
pub use run::{run, RunError};
