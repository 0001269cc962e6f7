use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration; the message names the offending fields.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mathematical precondition failed (e.g. a non-positive operator).
    #[error("domain error: {0}")]
    Domain(String),

    /// Arguments that do not fit together (mismatched cutoffs, shapes).
    #[error("usage error: {0}")]
    Usage(String),

    /// A solver failed or did not converge.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed binary or text input.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
