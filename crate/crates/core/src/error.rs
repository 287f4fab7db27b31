use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Malformed schema, fact, dependency or query.
    #[error("schema error: {0}")]
    Schema(String),
    /// The constraint set is outside the class an operation supports.
    #[error("constraint class error: {0}")]
    ConstraintClass(String),
    /// An enumeration or computation would exceed its configured cap.
    #[error("{what} exceeds cap: estimated {estimate}, cap {cap}")]
    CapExceeded {
        what: String,
        estimate: String,
        cap: u64,
    },
    /// Input violates a documented precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// The requested generator/mode combination is not available.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Malformed serialized input.
    #[error("parse error: {0}")]
    Parse(String),
    /// Internal invariant failed (probabilities not summing to one, etc).
    #[error("consistency error: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn cap(what: impl Into<String>, estimate: impl ToString, cap: u64) -> Self {
        Error::CapExceeded {
            what: what.into(),
            estimate: estimate.to_string(),
            cap,
        }
    }
}
