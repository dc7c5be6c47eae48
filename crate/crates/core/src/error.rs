use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NumericOverflow(String),

    #[error("tape was not built with higher-order support; {0} requires it")]
    Capability(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("k-nearest-neighbor graph is disconnected ({components} components); increase k")]
    Disconnected { components: usize },

    #[error("gave up after {attempts} rejection attempts; holes cover the sampling rectangle")]
    GenerationExhausted { attempts: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("parse error at row {row}: {reason}")]
    Parse { row: usize, reason: String },

    #[error("invalid {kind} file {path}: {reason}")]
    Format {
        kind: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("loss diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
