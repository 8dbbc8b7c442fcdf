use thiserror::Error;

use crate::calibration::TauCurve;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node not found: {0}")]
    NotFound(String),

    #[error("duplicate metric names after normalization: {}", .0.join(", "))]
    DuplicateNames(Vec<String>),

    #[error("provider failure ({context}): {message}")]
    Provider { context: String, message: String },

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("incompatible graph schema version {found} (expected {expected})")]
    IncompatibleVersion { found: i64, expected: u32 },

    #[error("csv error at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("duplicate date {0}")]
    DuplicateDate(String),

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("no curve intersection at the {stage} stage")]
    NoIntersection {
        stage: String,
        preserve: Box<TauCurve>,
        align: Box<TauCurve>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by the environment or by malformed input
    /// documents, as opposed to bad arguments.
    pub fn is_io_or_schema(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::Schema { .. }
                | Error::IncompatibleVersion { .. }
                | Error::Csv { .. }
                | Error::DuplicateDate(_)
        )
    }
}
