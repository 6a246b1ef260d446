use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("feature file {path} holds {actual} bytes, expected {expected}")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("malformed pose table row {row}: {reason}")]
    MalformedPose { row: usize, reason: String },
    #[error("dataset has no frames")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid cluster count k={k} for {n} frames")]
    InvalidClusterCount { k: usize, n: usize },
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("capacity {cap} x {k} clusters cannot hold {n} frames")]
    InfeasibleCapacity { cap: usize, k: usize, n: usize },
    #[error("dataset has no poses")]
    MissingPoses,
    #[error("supervised mode requires ground-truth keyframes")]
    MissingGtKeyframes,
    #[error("contrastive term needs at least 2 clusters, got {0}")]
    TooFewClusters(usize),
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated data: {0}")]
    Truncated(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
