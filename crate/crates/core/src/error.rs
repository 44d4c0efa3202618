use alloc::string::String;

/// Failure classes shared by every core operation.
///
/// The variants line up with the process exit codes used by the command-line
/// front end: configuration problems, data problems and numerical failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("index out of bounds: {0}")]
    Bounds(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl Error {
    /// The detail text without the class prefix.
    pub fn message(&self) -> &str {
        match self {
            Error::Config(m) | Error::Ingest(m) | Error::EmptyCorpus(m) | Error::Protocol(m) | Error::Bounds(m) | Error::Shape(m) | Error::Numerical(m) => m,
        }
    }
}
