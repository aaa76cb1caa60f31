use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("mask selects no entries")]
    EmptyMask,

    #[error("arrival map has no ignited cells")]
    NoIgnition,

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("sample {index}: {detail}")]
    Sample { index: usize, detail: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(detail: impl Into<String>) -> Self {
        Error::Shape(detail.into())
    }

    /// Short stable identifier for machine-readable error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Params(_) => "params",
            Error::Shape(_) => "shape",
            Error::EmptyMask => "empty-mask",
            Error::NoIgnition => "no-ignition",
            Error::Format { .. } => "format",
            Error::Sample { .. } => "sample",
            Error::Version { .. } => "version",
            Error::Io { .. } => "io",
            Error::Manifest(_) => "manifest",
        }
    }
}
