//! Command-line front end for `etlqg`: config files, experiment commands
//! and deterministic output files.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
