use thiserror::Error;

/// Errors produced by the valuation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("image decode: {0}")]
    Decode(String),

    #[error("weights: {0}")]
    Weights(String),

    #[error("weight file: {0}")]
    WeightFormat(String),

    #[error("feature cache: {0}")]
    Cache(String),

    #[error("split: {0}")]
    Split(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: u64, detail: String },

    #[error("no property produced image features")]
    NoFeatures,

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn file(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::File { path: path.display().to_string(), source }
    }
}
