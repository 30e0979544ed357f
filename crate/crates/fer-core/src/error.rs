use thiserror::Error;

/// Errors produced by the library, grouped by the failure surface so the CLI
/// can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or parameters supplied by the caller.
    #[error("config: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (feature files, checkpoints,
    /// mismatched dimensions). `row` is 1-based when the source is a file.
    #[error("data: {msg}{}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Data { msg: String, row: Option<usize> },

    /// Non-finite values where finite numbers are required.
    #[error("numeric: {0}")]
    Numeric(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data { msg: msg.into(), row: None }
    }

    pub fn data_at(row: usize, msg: impl Into<String>) -> Self {
        Error::Data { msg: msg.into(), row: Some(row) }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
