use std::path::PathBuf;

/// Errors produced by ingestion, estimation and reporting.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("duplicate (month, firm) pair ({month}, {firm})")]
    DuplicateCell { month: u32, firm: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("ill-conditioned problem: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown month {0}")]
    UnknownMonth(u32),

    #[error("unknown predictor `{0}`")]
    UnknownPredictor(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("cache format: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// runtime failure. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_) | Error::InvalidArgument(_) | Error::UnknownMonth(_) | Error::UnknownPredictor(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
