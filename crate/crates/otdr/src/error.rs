use std::io;
use std::path::PathBuf;

/// Everything the file formats and commands can fail with.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{}: not an OTDR model file", path.display())]
    BadMagic { path: PathBuf },
    #[error("{}: model format version {found} is not supported (expected {expected})", path.display())]
    UnsupportedVersion { path: PathBuf, found: u32, expected: u32 },
    #[error("{}: checksum mismatch, the file is corrupt or truncated", path.display())]
    ChecksumMismatch { path: PathBuf },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Core(#[from] otdr_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Process exit codes.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const DATA: i32 = 3;
    pub const NUMERIC: i32 = 4;
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use otdr_core::Error as E;
        match self {
            Error::Config(_) | Error::Core(E::Configuration(_)) => exit::CONFIG,
            Error::Core(E::NumericOverflow { .. } | E::TrainingFailure { .. } | E::CalibrationFailure(_)) => {
                exit::NUMERIC
            }
            _ => exit::DATA,
        }
    }
}
