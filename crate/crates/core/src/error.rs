use thiserror::Error;

/// Errors produced anywhere in the inference toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a structural or range invariant.
    #[error("domain error: {0}")]
    Domain(String),

    /// A table or state space would exceed the configured entry cap.
    #[error("capacity exceeded: {what} needs {size} entries (cap {cap})")]
    Capacity { what: String, size: u128, cap: usize },

    /// A message or cached quantity that should exist is missing.
    #[error("state error: {0}")]
    State(String),

    /// NaN or other numerical corruption.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capacity(what: impl Into<String>, size: u128, cap: usize) -> Self {
        Error::Capacity {
            what: what.into(),
            size,
            cap,
        }
    }
}
