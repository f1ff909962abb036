//! Configuration, presets and subcommands behind the `pkf` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;

pub use config::{Overrides, RunConfig, PRESETS};
pub use error::CliError;
pub use experiment::{Experiment, Model};
