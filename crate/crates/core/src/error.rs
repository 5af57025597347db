use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("incomplete rule: {0}")]
    IncompleteRule(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("internal solver error: {0}")]
    Internal(String),
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
