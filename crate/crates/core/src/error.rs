use thiserror::Error;

/// Crate-wide error type. The three domain categories (usage, data, numeric)
/// map to distinct process exit codes in the CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated an operation's contract (bad arguments, bad request).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data violated an invariant (non-finite values, missing class,
    /// corrupt file).
    #[error("data error: {0}")]
    Data(String),
    /// A computation produced non-finite intermediates or overflowed.
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
