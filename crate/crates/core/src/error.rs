use thiserror::Error;

/// Errors raised by the inference library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnpError {
    /// A precondition on the arguments was violated.
    #[error("usage error: {0}")]
    Usage(String),
    /// The request exceeds an enumeration or size guard rail and was refused.
    #[error("guard rail: {0}")]
    GuardRail(String),
}

pub type Result<T> = std::result::Result<T, BnpError>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(BnpError::Usage(msg.into()))
}
