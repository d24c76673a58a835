//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, calibration, and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a documented invariant.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Images that must share dimensions do not.
    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {width}x{height} for {what}")]
    DimensionMismatch {
        what: &'static str,
        expected_width: usize,
        expected_height: usize,
        width: usize,
        height: usize,
    },

    /// Profile calibration failed (rank-deficient or insufficient samples).
    #[error("calibration error: {0}")]
    Calibration(String),

    /// No usable ground-truth points for a metrics report.
    #[error("no usable points: {in_range} in-range ground-truth points, {valid} with valid predictions")]
    NoUsablePoints { in_range: usize, valid: usize },

    /// Malformed file contents.
    #[error("format error in {path}: {message}")]
    Format { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
