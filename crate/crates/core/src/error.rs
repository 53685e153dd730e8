use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not a rotation (orthogonality residual {residual:.3e})")]
    NotARotation { residual: f64 },

    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("factorization of a {size}x{size} system failed after jitter escalation")]
    FactorizationFailure { size: usize },

    #[error("weight domains overlap: {0}")]
    DomainOverlap(String),

    #[error("inconsistent timing: {0}")]
    InconsistentTiming(String),

    #[error("{}:{line}:{column}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: row {row}: {source}", path.display())]
    InvalidRow {
        path: PathBuf,
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
