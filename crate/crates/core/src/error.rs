use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("signal `{0}` has no measurements")]
    EmptySignal(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("node index {index} out of range for graph with {len} nodes")]
    InvalidNode { index: usize, len: usize },
    #[error("metric undefined: {0}")]
    MetricUndefined(String),
    #[error("subset `{0}` mixes graphs non-linearly; node and graph contributions are not defined")]
    NotNodeAttributable(String),
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("distance matrix is not a path metric: {0}")]
    NotAPathMetric(String),
    #[error("reconstruction implies zero-weight edges: {0}")]
    DegenerateWeights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::Partition(_) => 2,
            Error::Numerical(_) => 4,
            _ => 3,
        }
    }
}
