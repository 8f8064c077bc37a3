use thiserror::Error;

use crate::expert::ExpertError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document; `line` is 1-based (0 when the document as a
    /// whole is at fault, e.g. a missing header).
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid instance: {0}")]
    Validation(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A closed-form expression is undefined for the given arguments.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("instance has {n} variables, limit is {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("unsatisfiable: {0}")]
    Unsatisfiable(String),

    #[error(transparent)]
    Expert(#[from] ExpertError),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
