use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input vector or batch does not match what the network or operation expects.
    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A non-finite value appeared. `layer` is the zero-based layer index when the
    /// failure happened inside a network pass.
    #[error("non-finite value{}: {detail}", layer.map(|l| format!(" in layer {l}")).unwrap_or_default())]
    Numerical {
        layer: Option<usize>,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {detail}")]
    Parse { line: u64, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("training diverged at iteration {iteration}: {source}")]
    Training {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numerical(layer: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            layer,
            detail: detail.into(),
        }
    }
}
