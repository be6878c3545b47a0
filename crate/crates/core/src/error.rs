use thiserror::Error;

/// Errors raised by scene construction, the physical models and the harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("meta-atom count {0} is not a perfect square")]
    NonSquareLayer(usize),

    #[error("coincident points: {0}")]
    CoincidentPoints(&'static str),

    #[error("singular meta-atom circuit: {0}")]
    SingularCircuit(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("index out of range: {what} = {index}, valid range {range}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        range: String,
    },

    #[error("ill-conditioned Gram matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("zero target energy: NMSE undefined")]
    ZeroTarget,

    #[error("zero desired-link gain for user {0}")]
    ZeroDiagonal(usize),

    #[error("config error at line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn dims(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
