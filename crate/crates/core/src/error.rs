use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction, data loading and filtering.
#[derive(Debug, Error)]
pub enum Error {
    /// A specification or configuration value violates its invariants.
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("series too short: {0}")]
    TooShort(String),

    #[error("non-finite value in {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    /// Every particle weight underflowed; the model cannot explain the observation.
    #[error("all particle weights underflowed at step {step} (observation {observation})")]
    WeightUnderflow { step: usize, observation: f64 },

    #[error("zero ground-truth value at index {index}; MAPE is undefined")]
    ZeroTruth { index: usize },

    #[error("unstable coefficients: {0}")]
    Unstable(String),

    #[error("{path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{path}: row {row}, column {column:?}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the error comes from input data rather than configuration or numerics.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data { .. }
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::TooShort(_)
                | Error::ZeroTruth { .. }
        ) || matches!(self, Error::NonFinite { what, .. } if what.starts_with("input"))
    }

    /// Whether the error is a numerical failure of the filter.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::WeightUnderflow { .. })
            || matches!(self, Error::NonFinite { what, .. } if !what.starts_with("input"))
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
