use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FactorCovError>;

#[derive(Debug, Error)]
pub enum FactorCovError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("rank-deficient {what} (dimension {dimension}): min eigenvalue {min_eigenvalue:e} below cutoff")]
    RankDeficient {
        what: String,
        dimension: usize,
        min_eigenvalue: f64,
    },

    #[error("matrix is not positive definite ({context}): min eigenvalue {min_eigenvalue:e}")]
    NotPositiveDefinite {
        context: String,
        min_eigenvalue: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("failed to generate a positive definite error covariance after {attempts} attempts")]
    GenerationFailure { attempts: usize },

    #[error("inconsistent calibration: {0}")]
    Calibration(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error in {location}: {message}")]
    Parse { location: String, message: String },

    #[error("I/O error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FactorCovError {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        FactorCovError::Shape {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FactorCovError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly tag, used when a replication failure is recorded.
    pub fn tag(&self) -> &'static str {
        match self {
            FactorCovError::Shape { .. } => "shape",
            FactorCovError::InsufficientData { .. } => "insufficient_data",
            FactorCovError::RankDeficient { .. } => "rank_deficient",
            FactorCovError::NotPositiveDefinite { .. } => "not_positive_definite",
            FactorCovError::Domain(_) => "domain",
            FactorCovError::NumericalFailure(_) => "numerical_failure",
            FactorCovError::GenerationFailure { .. } => "generation_failure",
            FactorCovError::Calibration(_) => "calibration",
            FactorCovError::Precondition(_) => "precondition",
            FactorCovError::Parse { .. } => "parse",
            FactorCovError::Io { .. } => "io",
        }
    }
}
