use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("all observations are censored; a two-parameter family needs at least one event")]
    AllCensored,

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("cluster model has no clusters")]
    NoClusters,

    #[error("edge {edge} was created after the query time")]
    FutureEdge { edge: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;
