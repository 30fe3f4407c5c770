//! Crate-wide error type.

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration (binarization spec, loss/train settings, thresholds).
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid ontology document (cycles, contradictory axioms, bad bindings).
    #[error("ontology error: {0}")]
    Ontology(String),

    /// Shape mismatch between model, features and targets.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    /// A NaN or infinity showed up where a finite number is required.
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: String, index: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
