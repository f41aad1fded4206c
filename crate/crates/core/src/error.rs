use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("correlation factorization failed for user {user}, AP {ap}")]
    Factorization { user: usize, ap: usize },

    #[error("shadowing covariance is not positive definite")]
    ShadowCovariance,

    #[error("user {0} is degenerate: its channel has no component in the null space")]
    DegenerateUser(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
