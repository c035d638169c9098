use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    /// An operation was invoked outside its documented precondition.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("thread registry full: {capacity} threads already registered")]
    RegistryFull { capacity: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed history: {0}")]
    MalformedHistory(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
