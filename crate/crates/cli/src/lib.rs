//! Configuration, presets and the batch driver behind the `tdwo` binary.

pub mod config;
pub mod presets;
pub mod run;

use thiserror::Error;

pub use config::RunConfig;
pub use presets::{preset, presets};
pub use run::{run, RunResult};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Solver(#[from] tdwo::Error),
}
