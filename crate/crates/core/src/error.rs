use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel support is unbounded: {0}")]
    UnboundedKernel(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid label function: {0}")]
    InvalidLabels(String),
    #[error("invalid seed constraint: {0}")]
    InvalidSeeds(String),
    #[error("invalid polyhedral set: {0}")]
    InvalidPolyhedron(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("solver: {0}")]
    Solver(String),
    #[error("limit exceeded: {0}")]
    LimitExceeded(String),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
