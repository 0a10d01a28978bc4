use std::path::PathBuf;

use itemfm_core::als::AlsError;
use itemfm_core::cooc::CoocError;
use itemfm_core::embed::EmbedError;
use itemfm_core::eval::EvalError;
use itemfm_core::fm::FmError;
use itemfm_core::ingest::IngestError;
use itemfm_core::trainer::TrainError;
use thiserror::Error;

/// Process exit codes. Usage errors exit with 2 (clap's convention).
pub mod exit {
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const CONFIG: i32 = 4;
    pub const NON_FINITE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Cooc(#[from] CoocError),
    #[error(transparent)]
    Fm(#[from] FmError),
    #[error(transparent)]
    Als(#[from] AlsError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Other(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), line, msg: msg.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => exit::IO,
            Error::Config(_)
            | Error::Ingest(IngestError::InvalidConfig(_))
            | Error::Cooc(CoocError::InvalidConfig(_))
            | Error::Train(TrainError::InvalidConfig(_))
            | Error::Als(AlsError::InvalidConfig(_))
            | Error::Eval(EvalError::InvalidConfig(_)) => exit::CONFIG,
            Error::Train(TrainError::NonFinite { .. }) => exit::NON_FINITE,
            _ => exit::OTHER,
        }
    }
}
