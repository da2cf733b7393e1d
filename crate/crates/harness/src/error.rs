use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// A metric or log value came out non-finite.
    #[error("invariant breach: {0}")]
    Invariant(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Runtime(_) | Self::Io { .. } => 2,
            Self::Invariant(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

impl From<exposure_rppg::Error> for HarnessError {
    fn from(e: exposure_rppg::Error) -> Self {
        match e {
            exposure_rppg::Error::Config(msg) => Self::Config(msg),
            other => Self::Runtime(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
