use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("switch configuration has {got} entries, grid has {expected} switches")]
    SwitchConfigLength { expected: usize, got: usize },

    #[error("bus {bus} carries units but is disconnected from the slack bus")]
    Isolated { bus: usize },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} pu)")]
    Divergence { iterations: usize, mismatch: f64 },

    #[error("invalid scenario axis: {0}")]
    InvalidAxis(String),

    #[error("no scenario axis covers unit {unit} ({kind})")]
    MissingAxis { unit: usize, kind: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unknown accuracy class {0}")]
    UnknownAccuracyClass(String),

    #[error("invalid measurement specification: {0}")]
    InvalidSpec(String),

    #[error("fault target not present in measurement specification: {0}")]
    FaultTarget(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("training produced a non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("measurement specification hash mismatch: model expects {expected}, got {got}")]
    SpecHashMismatch { expected: String, got: String },

    #[error("gain matrix is singular, measurement set is not observable")]
    Unobservable,

    #[error("{failed} of {total} power flows failed, above the allowed budget")]
    FailureBudget { failed: usize, total: usize },

    #[error("no trained model for specification {0}")]
    MissingModel(String),

    #[error("invalid test case: {0}")]
    InvalidCase(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for errors caused by invalid user input rather than numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Divergence { .. }
                | Error::NonFiniteLoss { .. }
                | Error::Unobservable
                | Error::FailureBudget { .. }
        )
    }
}
