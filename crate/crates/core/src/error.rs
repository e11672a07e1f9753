use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no image pairs found ({} unmatched file(s))", unmatched.len())]
    EmptyDataset { unmatched: Vec<PathBuf> },

    #[error("insufficient samples: need at least {required}, got {got}")]
    InsufficientSamples { required: usize, got: usize },

    #[error(
        "kernel matrix is not numerically positive definite with alpha = {alpha:e}; \
         smallest working alpha found by doubling is {min_alpha:e}"
    )]
    IllConditioned { alpha: f64, min_alpha: f64 },

    #[error("{} pair(s) failed to decode (limit is 10% of {total})", failures.len())]
    TooManyFailures {
        failures: Vec<(PathBuf, String)>,
        total: usize,
    },

    #[error("format error in {path} at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 1 for domain errors, 2 for
    /// I/O and file format problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Format { .. } | Error::Io { .. } | Error::Image { .. } => 2,
            _ => 1,
        }
    }
}
