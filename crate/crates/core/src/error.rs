use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front-ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing required file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    Asymmetric(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("numeric range exceeded: {0}")]
    NumericRange(String),

    #[error("degenerate kernel: largest eigenvalue {0:e} is not positive")]
    DegenerateKernel(f64),

    #[error("kernel has {available} positive eigenvalues, {requested} requested")]
    InsufficientRank { requested: usize, available: usize },

    #[error("duplicate key {0} in perfect hash construction")]
    DuplicateKey(i64),

    #[error("empty key set")]
    EmptyKeys,

    #[error("bad magic bytes in {0}")]
    BadMagic(&'static str),

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("corrupt {what}: {msg}")]
    Corrupt { what: &'static str, msg: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) => ErrorKind::Usage,
            Error::NonFinite(_)
            | Error::NumericRange(_)
            | Error::DegenerateKernel(_)
            | Error::InsufficientRank { .. }
            | Error::Asymmetric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(what: &'static str, msg: impl Into<String>) -> Self {
        Error::Corrupt {
            what,
            msg: msg.into(),
        }
    }
}
