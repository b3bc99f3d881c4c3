use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid quaternion: {0}")]
    InvalidQuaternion(String),

    #[error("invalid orientation normal: {0}")]
    InvalidOrientation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("degenerate predicted quaternion: {0}")]
    QuaternionDegenerate(String),

    #[error("ingestion error in {path} at frame {frame:?}: {message}")]
    Ingestion {
        path: PathBuf,
        frame: Option<i64>,
        message: String,
    },

    #[error("layout version mismatch: expected {expected}, found {found}")]
    LayoutVersion { expected: u32, found: u32 },

    #[error("training diverged at epoch {epoch}, batch {batch_id}: loss = {loss}")]
    Divergence {
        epoch: usize,
        batch_id: String,
        loss: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error on {path}: {message}")]
    Serialization { path: PathBuf, message: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn ser(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Serialization {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Whether this error stems from invalid user input or configuration
    /// rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Shape(_)
                | Error::Ingestion { .. }
                | Error::LayoutVersion { .. }
                | Error::InvalidQuaternion(_)
                | Error::InvalidOrientation(_)
                | Error::DegenerateStatistics(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
