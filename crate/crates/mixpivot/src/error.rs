//! Error type shared across the crate.

use thiserror::Error;

/// Convenience alias used by every fallible operation in this crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A chain file violated the on-disk schema. `line` is 1-based.
    #[error("{path}:{line}: {message}")]
    ChainFile {
        path: String,
        line: usize,
        message: String,
    },

    /// An in-memory chain violated a structural invariant.
    #[error("invalid chain: {0}")]
    InvalidChain(String),

    /// Inputs whose shapes must agree did not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A caller-supplied argument was out of range or malformed.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every iteration was discarded by the pivotal filter, so there is
    /// nothing to relabel. Mapped to exit code 2 by the CLI.
    #[error("no valid iterations: every draw was dropped by the pivotal filter")]
    NoValidIterations,

    /// MUS could not find any cross-group tuple of candidate units whose
    /// mutual similarities are all within tolerance of zero.
    #[error("MUS found no separated pivots: no candidate tuple forms an identity submatrix")]
    MusNoSeparatedPivots,

    /// A configuration problem detected before any heavy work starts.
    /// Mapped to exit code 1 by the CLI.
    #[error("configuration error: {0}")]
    Config(String),

    /// Wraps an error with the pipeline stage it occurred in.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attaches a pipeline stage name to an error, preserving the cause.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True if this error (or the error it wraps) means the pivotal
    /// filter discarded the entire chain.
    pub fn is_no_valid_iterations(&self) -> bool {
        match self {
            Error::NoValidIterations => true,
            Error::Stage { source, .. } => source.is_no_valid_iterations(),
            _ => false,
        }
    }
}
