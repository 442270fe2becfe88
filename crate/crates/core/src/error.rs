use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A dataset file or in-memory dataset violates its schema.
    #[error("schema violation: {0}")]
    Schema(String),

    /// Matrix/vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// No patient carries any observation at the requested time step.
    #[error("empty slice: no patient has data at time step {t}")]
    EmptySlice { t: usize },

    /// An operation that needs both classes was given a single-class input.
    #[error("single-class input: {0}")]
    SingleClass(String),

    /// Split construction cannot satisfy its constraints.
    #[error("invalid split: {0}")]
    Split(String),

    /// A scalar coefficient or graph estimator was handed invalid input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Graph estimation failed for a specific feature pair.
    #[error("graph estimation failed for feature pair ({i},{j}): {source}")]
    PairContext {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },

    /// Model configuration and parameter tensors disagree.
    #[error("model config/parameter mismatch: {0}")]
    ModelShape(String),

    /// Training produced a non-finite loss.
    #[error("training diverged: {0}")]
    Divergence(String),

    /// Pipeline configuration is internally inconsistent.
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Attach the (i, j) feature-pair context to an estimator error.
    pub fn with_pair(self, i: usize, j: usize) -> Error {
        Error::PairContext {
            i,
            j,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
