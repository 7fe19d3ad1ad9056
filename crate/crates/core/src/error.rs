use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error("unsupported dimension: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("precision error: {0}")]
    Precision(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
