use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] hardnet_core::Error),

    #[error("generator could not produce a bounded set after {attempts} attempts (n={n}, m={m})")]
    Unbounded { n: usize, m: usize, attempts: usize },

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("barrier solver failed: {0}")]
    Barrier(String),

    #[error("infeasible output: max constraint value {0:e}")]
    InfeasibleOutput(f64),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, BenchError>;
