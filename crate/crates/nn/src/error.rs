use thiserror::Error;

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {layer}: expected {expected:?}, got {got:?}")]
    Shape {
        layer: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("batch norm in training mode needs a batch of at least 2 values per channel, got {0}")]
    SingleSampleBatch(usize),
    #[error("backward called before forward in {0}")]
    NoForward(&'static str),
    #[error("non-finite {what} in parameter tensor {index} (value {value})")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
