use thiserror::Error;

/// Errors produced by the inference engine and its I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A transition noise covariance could not be factorized while forming
    /// the bridged dynamics for a step of length `h`.
    #[error("bridge degenerate: singular transition covariance at step h = {h} s")]
    BridgeDegenerate { h: f64 },

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("degenerate evidence: no arrival time has finite likelihood")]
    DegenerateEvidence,

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
