use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fields live on different grids")]
    GridMismatch,

    #[error("field length {got} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("zero-mean precondition violated: mean = {mean:e}")]
    NonZeroMean { mean: f64 },

    #[error("model {model} does not support this grid: {reason}")]
    IncompatibleGrid { model: &'static str, reason: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("singular implicit operator at {0}")]
    Singular(String),

    #[error("{what} did not converge in {iterations} iterations (last residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("cycle cap of {cycles} reached with |dF| = {residual:e}")]
    CycleCap { cycles: usize, residual: f64 },

    #[error("run diverged")]
    Diverged,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("invalid experiment:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("i/o error on {path}: {source}")]
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
}
