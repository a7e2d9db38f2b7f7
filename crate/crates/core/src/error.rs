use thiserror::Error;

/// Errors raised across the simulator and its analysis pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("constraint violated for `{field}`: {reason}")]
    Constraint { field: String, reason: String },

    #[error("forbidden transition {lower} -> {upper}")]
    ForbiddenTransition { lower: String, upper: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("under-constrained fit: {0}")]
    UnderConstrained(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("scan coverage: {0}")]
    ScanCoverage(String),

    #[error("config: {0}")]
    Config(String),

    #[error("numerical: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn constraint(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Constraint {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Configuration problems are reported before any simulation runs; the CLI maps them to a
    /// distinct exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Constraint { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
