//! Library side of the `koopfam` binary: run configuration, subcommands and
//! CSV/JSON emitters.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::RunConfig;
pub use error::{CliError, ExitCode};
