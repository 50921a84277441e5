use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// Bad parameter passed to a constructor or operation.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Config file or CLI configuration problem.
    #[error("config error: {0}")]
    Config(String),

    /// Unknown environment preset id.
    #[error("unknown preset: {0}")]
    UnknownPreset(String),

    /// Vector/table shapes do not line up.
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    /// A non-finite number appeared where a finite one is required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// Estimator was queried before it was ever fitted.
    #[error("estimator has no fitted data")]
    EstimatorNotFitted,

    /// Normalized-improvement denominator is zero.
    #[error("normalized improvement undefined: baseline equals random-policy return")]
    UndefinedScore,

    /// Every seed of at least one suite cell diverged.
    #[error("all seeds diverged in suite cell: {0}")]
    AllSeedsDiverged(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl LabError {
    /// Process exit code for the CLI: 2 config, 3 divergence, 4 I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Io(_) => 4,
            LabError::AllSeedsDiverged(_) => 3,
            _ => 2,
        }
    }
}
