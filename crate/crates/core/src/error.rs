use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The squared values have zero empirical variance, so the adaptive
    /// scale parameter is undefined.
    #[error("degenerate sample: squared values have zero variance")]
    DegenerateSample,

    #[error("sample too small: n = {n}, need {required}")]
    SampleTooSmall { n: usize, required: String },

    #[error("scale problem has no positive root: input vector is identically zero")]
    ZeroVector,

    #[error("scale solver failed for entry ({i}, {j}): {source}")]
    ScaleFailure {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite matrix at update {iteration}")]
    NonFinite { iteration: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{failed} of {total} trials failed (limit 10%)")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
