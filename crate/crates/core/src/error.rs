use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no interaction records")]
    EmptyInput,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigensolver did not converge: achieved residual {achieved:e} (target {target:e})")]
    EigenNotConverged { achieved: f64, target: f64 },

    #[error("non-finite parameter detected at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
