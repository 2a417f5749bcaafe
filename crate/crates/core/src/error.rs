use std::path::PathBuf;

use thiserror::Error;

/// Failures decoding or encoding the binary tensor format.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}, expected \"AENT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),
    #[error("tensor has no dimensions")]
    EmptyDims,
    #[error("dimension {index} is zero")]
    ZeroDim { index: usize },
    #[error("dimension product overflows")]
    DimOverflow,
    #[error("truncated payload: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("data length {len} does not match dims product {expected}")]
    LengthMismatch { len: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("tensor format error: {0}")]
    Format(#[from] FormatError),
    #[error("validation error at `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate labels: {positives} positives, {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
