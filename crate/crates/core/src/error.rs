use thiserror::Error;

/// Errors produced by design construction, criterion evaluation and estimation.
#[derive(Debug, Error)]
pub enum SqdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design space too large: C({k}, {m}) = {count} patterns exceeds the cap of {cap}")]
    DesignSpaceTooLarge {
        k: usize,
        m: usize,
        count: u128,
        cap: usize,
    },

    #[error("criterion undefined: item {item} uncovered")]
    UncoveredItem { item: usize },

    #[error("information matrix is numerically singular (reciprocal condition {rcond:.3e})")]
    SingularInformation { rcond: f64 },

    #[error("covariance restricted to pattern {pattern:?} is singular")]
    SingularPattern { pattern: Vec<usize> },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("study aborted: {failed} of {total} replicates failed, first: {first}")]
    StudyAborted { failed: usize, total: usize, first: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SqdError>;
