use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding error: {0}")]
    Embed(String),
    #[error("norm error: {0}")]
    Norm(String),
    #[error("size cap exceeded: {what} = {value} > {cap}")]
    SizeCapExceeded {
        what: &'static str,
        value: u128,
        cap: u128,
    },
    #[error("rate fit failed: {0}")]
    Fit(String),
    #[error("training diverged at epoch {epoch}")]
    TrainDiverged { epoch: usize },
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
