use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("invalid plan: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("plan has no wall corners")]
    DegenerateGeometry,

    #[error("relaxation did not converge after {iterations} iterations (last update {last_update:e})")]
    Convergence { iterations: usize, last_update: f64 },

    #[error("trace extraction failed: {0}")]
    Extraction(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }
}
