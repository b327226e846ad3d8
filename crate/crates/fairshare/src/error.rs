use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("unknown id: {0}")]
    UnknownId(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("partitioning failed: {0}")]
    Partition(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed document at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("proximal update did not converge: {0}")]
    ProxDiverged(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("certification failed: {0}")]
    Certification(String),
}

pub type Result<T> = std::result::Result<T, Error>;
