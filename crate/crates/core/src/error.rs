use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("decoder Jacobian is rank deficient (Gram matrix not positive definite)")]
    SingularJacobian,

    #[error("non-finite function value at finite-difference probe {0}")]
    NonFiniteEvaluation(usize),

    #[error("non-finite value in input: {0}")]
    NonFinite(String),

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("degenerate hull: {0}")]
    DegenerateHull(String),

    #[error("gradient {index} lies outside the weighted L1 ball (norm {norm})")]
    GradientOutsideBall { index: usize, norm: f64 },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "training aborted at epoch {epoch}: {skipped} of {total} samples had a singular decoder Jacobian"
    )]
    TrainingAborted { epoch: usize, skipped: usize, total: usize },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), message: message.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
