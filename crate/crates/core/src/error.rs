use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::transport::FrameError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// Every violation found while validating a configuration.
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("data error: {0}")]
    Data(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Frame(#[from] FrameError),

    #[error("numeric error in tensor {tensor}: {reason}")]
    Numeric { tensor: usize, reason: String },

    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("connection error: {0}")]
    Connection(String),

    #[error("{}: {source}", .path.display())]
    File { path: PathBuf, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("round {round}{}, {phase}: {source}", client.map(|c| format!(", client {c}")).unwrap_or_default())]
    Context {
        round: u32,
        client: Option<usize>,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_round(self, round: u32, client: Option<usize>, phase: &'static str) -> Self {
        Error::Context { round, client, phase, source: Box::new(self) }
    }

    pub fn file(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::File { path: path.into(), source }
    }

    /// Innermost error, unwrapping round context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 configuration, 3 protocol, 4 numeric, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Config(_) | Error::Validation(_) => 2,
            Error::Protocol(_) | Error::Frame(_) | Error::Connection(_) => 3,
            Error::Numeric { .. } => 4,
            _ => 1,
        }
    }
}
