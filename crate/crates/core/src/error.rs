//! Error type shared across the harness.

use thiserror::Error;

/// Errors produced by any stage of the harness.
///
/// Variants map onto the CLI exit codes: usage errors exit 1, parse /
/// validation / config errors exit 2, backend failures exit 3, I/O exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    /// Malformed input data (e.g. broken JSON), with the byte offset of the
    /// first offending byte in the source.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Structurally valid input that violates a domain invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An impossible or incomplete configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A model backend failed in a way the run cannot absorb.
    #[error("backend error: {0}")]
    Backend(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Parse { .. } | Error::Validation(_) | Error::Config(_) => 2,
            Error::Backend(_) => 3,
            Error::Io(_) => 4,
        }
    }

    /// Prefix the failing pipeline stage, preserving the error class.
    pub fn in_stage(self, stage: &str) -> Error {
        match self {
            Error::Usage(m) => Error::Usage(format!("stage {stage}: {m}")),
            Error::Parse { offset, message } => Error::Parse {
                offset,
                message: format!("stage {stage}: {message}"),
            },
            Error::Validation(m) => Error::Validation(format!("stage {stage}: {m}")),
            Error::Config(m) => Error::Config(format!("stage {stage}: {m}")),
            Error::Backend(m) => Error::Backend(format!("stage {stage}: {m}")),
            Error::Io(e) => Error::Io(std::io::Error::new(
                e.kind(),
                format!("stage {stage}: {e}"),
            )),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
