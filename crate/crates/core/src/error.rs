use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("level {level} out of range for depth {depth}")]
    LevelOutOfRange { level: u32, depth: u32 },

    #[error("grid does not match space: {0}")]
    GridMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("kernel error: {0}")]
    Kernel(String),

    #[error("non-integrable diagonal for {0}")]
    NonIntegrable(String),

    #[error("coefficient {value:e} exceeds bound {bound:e} at {context}")]
    CoefficientBound {
        value: f64,
        bound: f64,
        context: String,
    },

    #[error("invalid shift specification: {0}")]
    InvalidShift(String),

    #[error("cubes are not strictly nested: {0}")]
    NotNested(String),

    #[error("goodness probability is zero for parameter {param} at level {level}")]
    ZeroGoodProbability { param: usize, level: u32 },

    #[error("unknown kernel name {0:?}")]
    UnknownKernel(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("estimator inconsistency: {0}")]
    Inconsistent(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
