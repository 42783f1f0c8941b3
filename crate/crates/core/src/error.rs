use thiserror::Error;

use crate::io::checkpoint::CheckpointError;
use crate::io::config::ConfigError;
use crate::io::csv::CsvError;
use crate::io::idx::IdxError;
use crate::model::MixtureModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (bad index, size mismatch, bad parameter).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data is malformed (non-finite values, empty sets, wrong shape).
    #[error("invalid input: {0}")]
    Input(String),
    /// Training produced a non-finite quantity. Carries the last model state.
    #[error("numeric abort at iteration {iteration}: {reason}")]
    NumericAbort {
        iteration: u64,
        reason: String,
        snapshot: Box<MixtureModel>,
    },
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// Process exit code for the command-line front end:
    /// 1 usage, 2 data, 3 numeric abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::NumericAbort { .. } => 3,
            Error::Input(_)
            | Error::Idx(_)
            | Error::Csv(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => 2,
        }
    }
}
