use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ring parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("ciphertext level mismatch ({left} vs {right})")]
    LevelMismatch { left: usize, right: usize },
    #[error("plaintext scale mismatch ({left} vs {right}); rescale with a constant first")]
    ScaleMismatch { left: u64, right: u64 },
    #[error("secret-dependent instrumentation requires lab mode")]
    LabModeDisabled,
    #[error("plaintext coefficient {0} is not centered modulo t")]
    PlaintextOutOfRange(String),
    #[error("modulus switch: {0}")]
    ModSwitch(String),
    #[error("chain too short: need {needed} primes, have {available}")]
    ChainTooShort { needed: usize, available: usize },
    #[error("prime search failed: {0}")]
    PrimeSearch(String),
    #[error("sample too small: {count} values, need at least {min}")]
    SampleTooSmall { count: usize, min: usize },
    #[error("probe mismatch: {0}")]
    ProbeMismatch(String),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("malformed container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
