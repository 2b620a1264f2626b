use thiserror::Error;

/// Errors produced by the nugget library.
#[derive(Debug, Error)]
pub enum NuggetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("nugget {0} has no assigned observations")]
    EmptyNugget(usize),

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("initialization failed after {0} retries: every draw produced an empty cluster")]
    InitializationFailed(usize),

    #[error("degenerate bounding box: {0}")]
    DegenerateRange(String),

    #[error("non-binary entry {value} at row {row}, column {col}")]
    NonBinary { row: usize, col: usize, value: f64 },

    #[error("covariance identity violated: residual {residual:e} exceeds {bound:e}")]
    IdentityViolation { residual: f64, bound: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NuggetError {
    /// Whether the error stems from bad input or parameters, as opposed to a
    /// failure while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            NuggetError::DimensionMismatch { .. }
                | NuggetError::NonFinite { .. }
                | NuggetError::Empty(_)
                | NuggetError::InvalidParameter(_)
                | NuggetError::DegenerateRange(_)
                | NuggetError::NonBinary { .. }
                | NuggetError::Parse { .. }
                | NuggetError::Csv(_)
        )
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        NuggetError::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = NuggetError> = std::result::Result<T, E>;
