use thiserror::Error;

/// Errors raised by field construction, sampling and Monte Carlo runs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("singular base matrix (|det| = {det:e})")]
    SingularLattice { det: f64 },

    #[error("point {point:?} is outside the window")]
    OutsideWindow { point: Vec<i64> },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate base field: {0}")]
    DegenerateBase(String),

    #[error("{failed} of {reps} replications failed; first: {first}")]
    Replications {
        failed: usize,
        reps: usize,
        first: String,
    },

    #[error("config error(s):\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
