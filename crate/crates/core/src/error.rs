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

    #[error("{path}: unsupported image: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("wrong measurement set: expected {expected}, got {got}")]
    WrongMeasurements { expected: String, got: String },

    /// Architecture A discards detector pixels, so the unmodulated total
    /// cannot be recovered from its own measurements.
    #[error("architecture {0} cannot derive I_total in-band; supply a separate all-open acquisition")]
    InBandTotalUnavailable(&'static str),

    #[error("PSF quadrature did not converge: max entry change {max_change:.3e} at oversampling {oversampling}")]
    NonConverged { max_change: f64, oversampling: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("artifact error: {0}")]
    Artifact(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
