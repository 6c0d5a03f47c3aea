use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad flags, unknown formats, inconsistent options.
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Stream(#[from] io::Error),
    /// Malformed input, with the 1-based line it was found on.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    /// Inputs that parse but do not fit together.
    #[error("{0}")]
    Data(String),
    #[error("config: {0}")]
    Config(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Core(#[from] crowdcount_core::Error),
}

impl Error {
    pub fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit status: 1 for usage errors, 2 for everything the data caused.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            _ => 2,
        }
    }
}
