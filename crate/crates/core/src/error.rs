//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Tensor/layer extents do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration (architecture, metadata flags, parameters).
    #[error("configuration error: {0}")]
    Config(String),

    /// A scalar parameter is out of its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Metadata record is missing a field required by the encoder spec.
    #[error("encoding error: {0}")]
    Encoding(String),

    /// Training-set sampling cannot proceed (e.g. a class is absent).
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Covariance is rank deficient and no regularizer was supplied.
    #[error("singularity error: {0}")]
    Singularity(String),

    /// A metric is undefined for the given input (e.g. zero variance).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Least-squares fit is degenerate.
    #[error("fit error: {0}")]
    Fit(String),

    /// Input data is inconsistent (unmapped frames, missing rows, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Serialized artifact failed its checksum.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Serialized artifact has an unsupported format version.
    #[error("version error: {0}")]
    Version(String),

    /// Non-finite values appeared during training/inference.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<String>, message: impl Into<String>) -> Self {
        CoreError::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
