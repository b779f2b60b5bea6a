use std::fmt;

/// Coarse error classes surfaced by the command-line tool as exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Input,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 2,
            ErrorCategory::Input => 3,
            ErrorCategory::Numerical => 4,
            ErrorCategory::Io => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Config => "config",
            ErrorCategory::Input => "input",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate labels: group 0 has {group0} members and group 1 has {group1}, both need at least 2")]
    DegenerateLabels { group0: usize, group1: usize },

    #[error("invalid label {value:?} at row {row}: expected 0 or 1")]
    InvalidLabel { row: usize, value: String },

    #[error("dimension mismatch: {what} (expected {expected}, found {found})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed binary matrix: {0}")]
    Format(String),

    #[error("rank {rank} exceeds the maximum {max} allowed by the training matrix")]
    RankTooHigh { rank: usize, max: usize },

    #[error("insufficient samples: {samples} entries per column, at least {required} required")]
    InsufficientSamples { samples: usize, required: usize },

    #[error("insufficient trials: {trials} trials cannot resolve level alpha (need at least {required})")]
    InsufficientTrials { trials: usize, required: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported artifact version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::InvalidParameter(_)
            | Error::RankTooHigh { .. }
            | Error::InsufficientSamples { .. }
            | Error::InsufficientTrials { .. } => ErrorCategory::Config,
            Error::DegenerateLabels { .. }
            | Error::InvalidLabel { .. }
            | Error::DimensionMismatch { .. }
            | Error::NonFiniteValue { .. }
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::UnsupportedVersion { .. } => ErrorCategory::Input,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorCategory::Io,
            Error::Csv(_) => ErrorCategory::Input,
            Error::Json(e) if e.is_io() => ErrorCategory::Io,
            Error::Json(_) => ErrorCategory::Input,
            Error::Io(_) => ErrorCategory::Io,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
