use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sada::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("all {0} replicates diverged")]
    AllDiverged(usize),
    #[error("oracle check failed: {0}")]
    OracleFailed(String),
}

impl BenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            // bad parameters are configuration problems too
            BenchError::Core(e) if !matches!(e, sada::Error::Divergence { .. }) => 2,
            BenchError::Core(_) | BenchError::AllDiverged(_) => 3,
            BenchError::OracleFailed(_) => 4,
            BenchError::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
