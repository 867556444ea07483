//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by the solver toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// An internal numerical procedure failed to converge or lost accuracy.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The caller combined inputs in an unsupported way.
    #[error("usage error: {0}")]
    Usage(String),

    /// A least-squares fit did not reach an acceptable residual.
    #[error("fit failure: {0}")]
    Fit(String),

    /// Configuration text could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// File or formatting problems in dataset persistence.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Domain(_) => 2,
            Error::Numerical(_) | Error::Io(_) => 3,
            Error::Fit(_) => 4,
        }
    }
}
