use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by mesh handling, assembly, solvers and the optimizer.
#[derive(Debug, Error)]
pub enum Error {
    /// The triangle list is not a closed, consistently oriented 2-manifold.
    #[error("structural error: {0}")]
    Structural(String),

    /// A geometric quantity collapsed (zero area, zero edge length, antipodal normals, ...).
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    /// A linear solver did not reach its tolerance or the system is singular.
    #[error("solver error: {0}")]
    Solver(String),

    /// Projection of a node onto an analytic surface failed.
    #[error("curving error: {0}")]
    Curving(String),

    /// Invalid configuration value, optionally tied to a line of a config file.
    #[error("configuration error{}: {message}", line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    /// A caller violated an operation precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file content.
    #[error("parse error in {path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config {
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
