//! Crate-wide error type and the exit codes it maps to.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why a dataset was rejected by the benchmark guards.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum GuardViolation {
    /// More than `max` observations.
    TooManyRows { n: usize, max: usize },
    /// Fewer than `min` observations.
    TooFewRows { n: usize, min: usize },
    /// Response takes fewer than `min` distinct values.
    TooFewDistinctResponses { distinct: usize, min: usize },
}

impl std::fmt::Display for GuardViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GuardViolation::TooManyRows { n, max } => {
                write!(f, "dataset has {n} rows, more than the {max} allowed")
            }
            GuardViolation::TooFewRows { n, min } => {
                write!(f, "dataset has {n} rows, fewer than the {min} required")
            }
            GuardViolation::TooFewDistinctResponses { distinct, min } => {
                write!(f, "response has {distinct} distinct values, fewer than the {min} required")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("dataset rejected: {0}")]
    GuardRejected(GuardViolation),

    #[error("subsample of {actual} rows is too small; at least {required} are required")]
    SubsampleTooSmall { required: usize, actual: usize },

    #[error(
        "quantile fit did not converge within {iterations} iterations \
         (best objective {objective:.6e}); best iterate attached"
    )]
    QuantileFitNonConvergence {
        iterations: usize,
        objective: f64,
        best: Box<crate::baselines::LinearQuantileModel>,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("response column {0:?} not present in the input")]
    MissingResponseColumn(String),

    #[error("response column {0:?} is not numeric")]
    NonNumericResponse(String),

    #[error("no usable rows after rejecting invalid ones")]
    NoUsableRows,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 0 success, 2 invalid input,
    /// 3 guard rejection, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::GuardRejected(_) => 3,
            Error::DegenerateSample(_) | Error::QuantileFitNonConvergence { .. } => 4,
            _ => 2,
        }
    }
}
