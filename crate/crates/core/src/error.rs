use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("no entries")]
    NoEntries,

    #[error("duplicate entry ({i},{j},{k})")]
    DuplicateEntry { i: usize, j: usize, k: usize },

    #[error("index ({i},{j},{k}) outside shape {shape}")]
    IndexOutOfBounds {
        i: usize,
        j: usize,
        k: usize,
        shape: String,
    },

    #[error("non-finite value at ({i},{j},{k})")]
    NonFinite { i: usize, j: usize, k: usize },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("diverged at ({i},{j},{k}): non-finite parameter after update")]
    Divergence { i: usize, j: usize, k: usize },

    #[error("invalid PID slot {slot} (state holds {len})")]
    InvalidSlot { slot: usize, len: usize },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with a short prefix naming where it came from.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } => true,
            Error::Context { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}
