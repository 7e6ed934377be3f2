use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum SciError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frame dimensions must be even for a Bayer CFA, got {height}x{width}")]
    OddDimensions { height: usize, width: usize },
    #[error("frame {height}x{width} is too small (need at least {min}x{min})")]
    TooSmall { height: usize, width: usize, min: usize },
    #[error("color video requires a CFA operator")]
    MissingCfa,
    #[error("unsupported CFA pattern `{0}` (only rggb is supported)")]
    UnsupportedCfa(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("masks missing: {0}")]
    MissingMasks(String),
    #[error("digest mismatch: {0}")]
    DigestMismatch(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl SciError {
    /// Stable machine-readable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            SciError::DimensionMismatch(_) => "E_DIMENSION",
            SciError::OddDimensions { .. } => "E_ODD_DIMS",
            SciError::TooSmall { .. } => "E_TOO_SMALL",
            SciError::MissingCfa => "E_MISSING_CFA",
            SciError::UnsupportedCfa(_) => "E_UNSUPPORTED_CFA",
            SciError::InvalidParameter(_) => "E_INVALID_PARAM",
            SciError::EmptyDataset => "E_EMPTY_DATASET",
            SciError::MissingMasks(_) => "E_MISSING_MASKS",
            SciError::DigestMismatch(_) => "E_DIGEST_MISMATCH",
            SciError::Format(_) => "E_FORMAT",
            SciError::NonFinite(_) => "E_NON_FINITE",
            SciError::Io { .. } => "E_IO",
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        SciError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, SciError>;
