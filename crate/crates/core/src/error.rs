use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error(
        "cholesky failed even with diagonal jitter {max_jitter:e}; \
         smallest eigenvalue estimate {min_eigenvalue_estimate:e}"
    )]
    Factorization { max_jitter: f64, min_eigenvalue_estimate: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("unit {unit} has zero pre-period variance")]
    ZeroVariance { unit: String },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: unbalanced panel, unit `{unit}` has {found} rows but the panel has {expected} periods")]
    UnbalancedPanel { path: PathBuf, unit: String, found: usize, expected: usize },

    #[error("{path}: duplicate observation for unit `{unit}` at time {time}")]
    DuplicateObservation { path: PathBuf, unit: String, time: i64 },

    #[error("{path}: treated unit `{unit}` has non-positive or missing distance")]
    BadDistance { path: PathBuf, unit: String },

    #[error("t0 = {t0} is outside 1..{periods}")]
    PreperiodOutOfRange { t0: usize, periods: usize },

    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("unknown {kind} index {index}")]
    UnknownIndex { kind: &'static str, index: usize },

    #[error("sampler initialization failed: {0}")]
    SamplerInit(String),

    #[error("non-finite log density: {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io { context: context.into(), source }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Self::Csv { context: context.into(), source }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Self::Json { context: context.into(), source }
    }
}
