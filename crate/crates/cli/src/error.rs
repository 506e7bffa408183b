use photonwave_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("replayed output {file} differs from the manifest checksum")]
    Mismatch { file: String },
}

impl CliError {
    /// 2: bad input, 3: quadrature did not converge, 4: no usable search
    /// point, 1: anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_) | CoreError::Parse { .. } => 2,
                CoreError::NumericConvergence { .. } => 3,
                CoreError::SearchDegenerate | CoreError::UndefinedFidelity => 4,
                _ => 1,
            },
            _ => 1,
        }
    }
}
