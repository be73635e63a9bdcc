use std::io;
use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
///
/// Loaders reject malformed input instead of repairing it, so most variants
/// carry enough location information (path, line, byte offset, key) to find
/// the offending record.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate key {key}")]
    DuplicateKey {
        path: PathBuf,
        line: usize,
        key: String,
    },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated container: expected {needed} more bytes at offset {offset}")]
    Truncated { offset: u64, needed: u64 },

    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing embeddings for keys: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("non-finite value at stage {stage}")]
    NonFinite { stage: &'static str },

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
