use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid labeling: {0}")]
    InvalidLabeling(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("class {0} never appears in the training labels")]
    AbsentClass(usize),

    #[error("invalid loss weights: {0}")]
    InvalidLossWeights(String),

    #[error("cannot train a tree: {0}")]
    EmptyTrainingSet(&'static str),

    #[error("feature vector has dimension {actual}, tree needs at least {required}")]
    FeatureDimension { required: usize, actual: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unsupported number of classes {0} for this operation")]
    UnsupportedClassCount(usize),

    #[error("instance has no ground-truth labeling")]
    MissingTruth,

    #[error("QP dimension mismatch: constraint {index} has length {actual}, expected {expected}")]
    QpDimension {
        index: usize,
        expected: usize,
        actual: usize,
    },

    #[error("QP did not converge after {iterations} iterations (residual {residual:.3e})")]
    QpNotConverged { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no dual signal: lambda map is empty")]
    NoDualSignal,

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
