use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the lab.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A matrix that must stay positive definite lost that property, or the
    /// inertia matrix became singular. Usually means the step size is too
    /// large for the chosen gains.
    #[error("numerical degeneracy: {what}{}", step.map(|k| format!(" at step {k}")).unwrap_or_default())]
    NumericalDegeneracy { what: String, step: Option<usize> },

    #[error("config syntax error on line {line}: {msg}")]
    ConfigSyntax { line: usize, msg: String },

    #[error("config value out of range for `{key}`: {msg}")]
    ConfigRange { key: String, msg: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn degenerate(what: impl Into<String>) -> Self {
        Error::NumericalDegeneracy { what: what.into(), step: None }
    }

    /// Attach a simulation step index to a degeneracy error.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::NumericalDegeneracy { what, .. } => Error::NumericalDegeneracy { what, step: Some(k) },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
