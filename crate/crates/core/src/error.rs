use std::io;

use thiserror::Error;

use crate::dictionary::DictKey;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic bytes: expected \"DRVK\"")]
    BadMagic,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("file truncated while reading {0}")]
    Truncated(&'static str),

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("fit failed for entry {key}: {reason}")]
    FitFailed { key: DictKey, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no valid result: {0}")]
    NoResult(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// True for errors raised while decoding a dictionary or report file.
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            Error::Io(_)
                | Error::BadMagic
                | Error::VersionMismatch { .. }
                | Error::Truncated(_)
                | Error::Checksum(_)
                | Error::Format(_)
        )
    }
}
