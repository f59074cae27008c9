use thiserror::Error;

/// Crate-wide error type.
///
/// The variants are grouped by how the CLI maps them to exit codes:
/// argument/configuration problems are usage errors (exit 2), parse and
/// lookup failures on input data are data errors (exit 3), and violated
/// internal invariants are internal errors (exit 4).
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration is malformed or incompatible with the target object.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data (edge lists, dumps, config files) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    /// A lookup addressed data that does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// An operation was invoked on an object in the wrong state.
    #[error("state error: {0}")]
    State(String),

    /// An internal invariant did not hold; indicates a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
}
