use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A malformed input record. `line` is 1-based and counts the header.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error("unsupported model file version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("unknown {kind} level '{level}' at prediction time")]
    UnknownLevel { kind: &'static str, level: String },

    #[error("exact enumeration needs d <= {max} features, got {d}; use permutation sampling instead")]
    TooManyFeatures { d: usize, max: usize },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("training diverged at epoch {epoch}; lower the learning rate")]
    Diverged { epoch: usize },

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True when the error stems from bad input data or configuration rather
    /// than from a numerical failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::RankDeficient(_) | Error::NoConvergence { .. } | Error::Diverged { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
