use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A row of an input file could not be read.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Input is well-formed row by row but violates a structural rule
    /// (ordering, grid sizes, missing fields).
    #[error("structural error: {0}")]
    Structure(String),

    /// A parameter or configuration value is outside its admissible domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("pool for class {class} holds {available} windows, {needed} required")]
    InsufficientPool {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
