use thiserror::Error;

#[derive(Debug, Error)]
pub enum QdcError {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A call was made in a state that does not satisfy its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, QdcError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(QdcError::Domain(msg.into()))
}
