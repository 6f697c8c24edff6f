use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate saliency: {0}")]
    DegenerateSaliency(String),

    #[error("degenerate output: {0}")]
    DegenerateOutput(String),

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),

    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("suite error: {0}")]
    Suite(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in skip records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Manifest(_) => "manifest",
            Error::Validation(_) => "validation",
            Error::Shape(_) => "shape",
            Error::DegenerateSaliency(_) => "degenerate-saliency",
            Error::DegenerateOutput(_) => "degenerate-output",
            Error::DegenerateSeries(_) => "degenerate-series",
            Error::EmptyMask(_) => "empty-mask",
            Error::Suite(_) => "suite",
            Error::Usage(_) => "usage",
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(format!($($arg)*)) };
}

macro_rules! validation_err {
    ($($arg:tt)*) => { $crate::error::Error::Validation(format!($($arg)*)) };
}

pub(crate) use shape_err;
pub(crate) use validation_err;
