//! Error taxonomy shared across the crate.
//!
//! Variants are grouped by how the command-line tool reports them:
//! usage problems (`InvalidArgument`), file or data problems (`Io`,
//! `Format`, `InvalidState`, `Mismatch`) and numerical problems
//! (`OutOfRange`, `Numerical`).

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying I/O failure (open, read, write, ...).
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A file exists but its contents do not parse as the expected format.
    /// `offset` is the byte position at which the problem was detected.
    #[error("format error in {path:?} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// A caller-supplied value is outside the accepted domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was applied to a value in the wrong state
    /// (e.g. normalizing an already-normalized volume).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// Two inputs that must agree (dimensions, depths, shapes) do not.
    #[error("mismatch: {0}")]
    Mismatch(String),

    /// A data value violates a numeric bound; the message names the
    /// offending location and value.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// A computation produced a non-finite or otherwise unusable number.
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl Error {
    /// Convenience constructor for [`Error::Format`].
    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line tool for this error:
    /// 1 usage, 2 i/o or format, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Io(_) | Error::Format { .. } | Error::InvalidState(_) | Error::Mismatch(_) => 2,
            Error::OutOfRange(_) | Error::Numerical(_) => 3,
        }
    }
}
