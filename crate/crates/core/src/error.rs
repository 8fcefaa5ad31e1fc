use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("pilot matrix is rank deficient")]
    SingularPilots,
    #[error("channel matrix is rank deficient")]
    SingularMatrix,
    #[error("search space of {size} vectors exceeds the limit of {limit}")]
    TooLarge { size: u128, limit: u128 },
    #[error("invalid configuration for `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
