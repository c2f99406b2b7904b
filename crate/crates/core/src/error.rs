use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid set record: {0}")]
    InvalidRecord(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("token {token} is not in the closed universe of {universe} tokens")]
    UnknownToken { token: String, universe: usize },

    #[error("index format: {0}")]
    Format(#[from] FormatError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures decoding a serialized index. Each corruption mode is distinct so
/// callers can tell a stale file from a damaged one.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("input truncated")]
    Truncated,
    #[error("malformed payload: {0}")]
    Malformed(String),
}
