use thiserror::Error;

/// Errors produced by the registration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("empty index")]
    EmptyIndex,

    #[error("degenerate neighborhood: need at least 3 neighbors, got {0}")]
    DegenerateNeighborhood(usize),

    #[error("cloud has {got} points, needs at least {need}")]
    TooFewPoints { got: usize, need: usize },

    #[error("point at sensor origin (index {0})")]
    PointAtSensorOrigin(usize),

    #[error("too few points for K components: {points} pooled points, K = {components}")]
    TooFewPointsForComponents { points: usize, components: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate ICP update")]
    DegenerateIcpUpdate,

    #[error("no records to summarize")]
    EmptySummary,

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
