use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument outside the function domain: {0}")]
    Domain(f64),

    #[error("infeasible link: rate offset theta + log2(P) = {offset} is not positive")]
    InfeasibleLink { offset: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("stage count {requested} exceeds table horizon {available}")]
    TableRange { requested: usize, available: usize },

    #[error("state space too large: {bits} cache bits (limit {limit})")]
    StateSpaceTooLarge { bits: usize, limit: usize },

    #[error("value table format: {0}")]
    TableFormat(String),

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
