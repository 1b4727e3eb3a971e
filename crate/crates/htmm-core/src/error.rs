use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("ellipticity violation: {0}")]
    Ellipticity(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("weight expression error: {0}")]
    Weight(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("config validation failed:\n{}", .0.join("\n"))]
    ConfigList(Vec<String>),

    #[error("missing data: {0}")]
    Missing(String),

    #[error("zero reference norm: relative error undefined")]
    ZeroReferenceNorm,

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
