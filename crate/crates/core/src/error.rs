use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("factorization failed: {0}")]
    Factorization(String),
    #[error("solver failed: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Solver { residual: f64, tolerance: f64 },
    #[error("unknown check id `{0}`")]
    UnknownCheck(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
