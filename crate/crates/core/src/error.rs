use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is singular (pivot {pivot:e} in column {column})")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("noise matrix is not column stochastic: {0}")]
    NotColumnStochastic(String),

    #[error("invalid noise level sigma={sigma} for n={n} classes (must satisfy {bound})")]
    InvalidSigma { sigma: f64, n: usize, bound: String },

    #[error("non-positive denominator <B, C> = {value:e}{}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    NonPositiveDenominator { value: f64, step: Option<usize> },

    #[error("empty sample")]
    EmptySample,

    #[error("label {label} outside [1..{n}]")]
    DegenerateLabels { label: i64, n: usize },

    #[error("measure `{0}` is not supported here: {1}")]
    UnsupportedMeasure(String, String),

    #[error("{path}: parse error at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("{path}: label column `{column}` not found")]
    MissingLabelColumn { path: PathBuf, column: String },

    #[error("no results to report")]
    EmptyResults,

    #[error("configuration error: {0}")]
    Config(String),

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

    /// Whether the error comes from user input (bad flags, files, shapes)
    /// rather than from the numerics of a run.
    pub fn is_config_error(&self) -> bool {
        !matches!(
            self,
            Error::SingularMatrix { .. } | Error::NonPositiveDenominator { .. }
        )
    }
}
