use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error type for model construction, evaluation, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid model specification (cycles, undeclared variables, bad parameters).
    #[error("invalid model: {0}")]
    ModelSpec(String),

    /// Evaluation referenced a variable that cannot be resolved.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// A role assignment is inconsistent with the diagram.
    #[error("invalid SFM projection: {0}")]
    Projection(String),

    /// A conditioning event has no (or too little) support in the sample.
    #[error("degenerate event: {0}")]
    DegenerateEvent(String),

    /// The requested measure is not identifiable under the given projection.
    #[error("not identifiable: {0}")]
    NotIdentifiable(String),

    /// Malformed dataset or role binding.
    #[error("data error: {0}")]
    Data(String),

    /// Estimation failed (empty cells, invalid configuration, ...).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Configuration file or CLI input could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
