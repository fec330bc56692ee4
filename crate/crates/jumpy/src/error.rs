use thiserror::Error;

#[derive(Error, Debug)]
pub enum JumpyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("storage error: {path}: {msg}")]
    Storage { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, JumpyError>;

impl JumpyError {
    pub fn shape(msg: impl Into<String>) -> Self {
        JumpyError::Shape(msg.into())
    }
    pub fn domain(msg: impl Into<String>) -> Self {
        JumpyError::Domain(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        JumpyError::Numerical(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        JumpyError::Config(msg.into())
    }
}
