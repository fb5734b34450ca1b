//! Command-line driver: configuration, experiment dispatch and output files.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli, Command};
pub use config::{parse_config, RunConfig};
