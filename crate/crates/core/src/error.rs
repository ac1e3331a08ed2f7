//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the training, topology, and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("batch must contain at least {min} examples, got {got}")]
    BatchTooSmall { min: usize, got: usize },

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {min} neurons, got {got}")]
    TooFewNeurons { min: usize, got: usize },

    #[error("persistence diagram is empty")]
    EmptyDiagram,

    #[error("brute-force diagram supports 2..={max} vertices, got {got}")]
    TooManyVertices { max: usize, got: usize },

    #[error("expected {expected} weight adjoints, got {got}")]
    AdjointLengthMismatch { expected: usize, got: usize },

    #[error("backward root must be a scalar node")]
    NonScalarRoot,

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("all runs in the sweep failed")]
    AllRunsFailed,

    #[error("{path}: bad magic {got:#010x}, expected {expected:#010x}")]
    IdxBadMagic { path: String, got: u32, expected: u32 },

    #[error("{path}: truncated idx file ({detail})")]
    IdxTruncated { path: String, detail: String },

    #[error("idx pair mismatch: {images} images but {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed table {path}: {detail}")]
    MalformedTable { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
