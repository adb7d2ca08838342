use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: line {line}: {detail}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("{}: unsupported format version {found} (expected {expected})", path.display())]
    Version {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{}: truncated: expected {expected} bytes, found {found}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{}: checksum mismatch", path.display())]
    Checksum { path: PathBuf },

    #[error("{}: integrity: {detail}", path.display())]
    Integrity { path: PathBuf, detail: String },

    #[error("layer mismatch at `{0}`")]
    LayerMismatch(String),

    #[error("reference layer `{0}` has zero norm")]
    ZeroNormReference(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("singular covariance at range bin {0}")]
    Singular(usize),

    #[error("usage: {0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Stable machine-readable category, printed by the CLI on failure.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "config",
            Error::Shape { .. } => "shape",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Version { .. } => "version",
            Error::Truncated { .. } => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::Integrity { .. } => "integrity",
            Error::LayerMismatch(_) => "layer-mismatch",
            Error::ZeroNormReference(_) => "zero-norm-reference",
            Error::NonFinite(_) => "non-finite",
            Error::Singular(_) => "singular",
            Error::Usage(_) => "usage",
        }
    }
}
