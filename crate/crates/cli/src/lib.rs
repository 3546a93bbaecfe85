//! Scenario files, artifacts and the run pipeline behind the `dfmheat` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod output;
pub mod run;
pub mod scenario;
pub mod units;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad scenario file or command-line value.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: dfmheat::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for invalid input, 3 for solver failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core { source, .. } => match source {
                dfmheat::Error::Solver(..)
                | dfmheat::Error::IncompatibleRates { .. }
                | dfmheat::Error::CyclicFlux { .. } => 3,
                dfmheat::Error::Io(_) => 1,
                _ => 2,
            },
            CliError::Output { .. } => 1,
        }
    }
}

pub(crate) trait Context<T> {
    fn ctx(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for Result<T, dfmheat::Error> {
    fn ctx(self, what: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Core { context: what.into(), source })
    }
}
