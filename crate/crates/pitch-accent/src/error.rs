//! Error type shared by all modules.

use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// File could not be read or written.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or unsupported WAV data.
    #[error("wav: {0}")]
    Wav(String),

    /// Signal-level precondition violated (e.g. empty input).
    #[error("signal: {0}")]
    Signal(String),

    /// Invalid manifest content, pointing at the offending line.
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    /// Invalid embedding file content.
    #[error("embeddings: line {line}: {msg}")]
    Embedding { line: usize, msg: String },

    /// Tensor or layer dimensions do not fit together.
    #[error("shape: {0}")]
    Shape(String),

    /// Invalid model or experiment configuration.
    #[error("config: {0}")]
    Config(String),

    /// Training aborted (non-finite loss or parameters).
    #[error("training: {0}")]
    Training(String),

    /// Malformed checkpoint or splits file.
    #[error("{path}: line {line}: {msg}")]
    FileFormat {
        path: PathBuf,
        line: usize,
        msg: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
