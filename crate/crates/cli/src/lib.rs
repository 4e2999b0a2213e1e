//! Configuration loading and subcommand implementations behind the
//! `fenchelkit` binary.

pub mod commands;
pub mod config;

pub use commands::{CliError, Outcome};
pub use config::{ConfigError, LoadedConfig, ProblemConfig};
