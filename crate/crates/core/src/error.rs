use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("row {row}, field `{field}`: {message}")]
    MalformedRow {
        row: usize,
        field: String,
        message: String,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unknown service label `{label}`; valid labels: {valid}")]
    UnknownLabel { label: String, valid: String },

    #[error("row {row}: packet count exceeds 30")]
    TooManyPackets { row: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("batch too small for batch statistics (got {0} rows, need at least 2)")]
    BatchTooSmall(usize),

    #[error("training diverged: non-finite loss {0}")]
    Divergence(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short category used by the CLI's one-line error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedRow { .. }
            | Error::MalformedHeader(_)
            | Error::UnknownLabel { .. }
            | Error::TooManyPackets { .. } => "data",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::BatchTooSmall(_) | Error::Divergence(_) => "training",
            Error::Empty(_) => "data",
            Error::Checkpoint(_) => "checkpoint",
        }
    }
}
