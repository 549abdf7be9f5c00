use std::path::PathBuf;

pub use osrk_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: image::ImageError },
    #[error("{path}: CSV error: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Mstar(#[from] MstarError),
    /// A problem with the input data set (empty, missing classes, bad manifest rows).
    #[error("data error: {0}")]
    Data(String),
}

/// Binary container problems (kernel banks, checkpoints, tensor files).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },
    #[error("file truncated at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed content at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
}

/// Phoenix-header parse failures, each with the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MstarError {
    #[error("byte 0: first header line does not contain PhoenixHeaderVer")]
    NotPhoenix,
    #[error("no [EndofPhoenixHeader] line before byte {scanned}")]
    MissingTerminator { scanned: usize },
    #[error("header key `{key}` missing (header ends at byte {header_end})")]
    MissingKey { key: String, header_end: usize },
    #[error("header key `{key}` at byte {offset} has invalid value `{value}`")]
    BadValue { key: String, offset: usize, value: String },
    #[error("payload starting at byte {payload_offset} has {found} bytes, expected {expected}")]
    Truncated { payload_offset: usize, expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 configuration, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Core(e) if e.is_config() => 2,
            Error::Core(CoreError::Numerical(_)) => 4,
            _ => 3,
        }
    }
}
