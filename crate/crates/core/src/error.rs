use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid belief transition: {0}")]
    InvalidTransition(String),

    /// A proven inequality failed numerically, which means a solver bug.
    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("network generation failed: {0}")]
    Network(String),

    #[error("no sweep rows for policy {0}")]
    EmptyTable(String),

    #[error("threshold cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
