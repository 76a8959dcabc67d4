use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty candidate list for agent {agent}")]
    EmptyCandidateList { agent: usize },

    #[error("missing null action for agent {agent}")]
    MissingNullAction { agent: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("negative consumption for agent {agent}, candidate {candidate}")]
    NegativeConsumption { agent: usize, candidate: usize },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("eta undefined at beta = 1")]
    EtaUndefined,

    #[error("instance too large for enumeration ({0} joint actions)")]
    TooLarge(u128),

    #[error("infeasible allocation: {0}")]
    Infeasible(String),

    #[error("fairness domain error: {0}")]
    Domain(String),

    #[error("non-finite training target")]
    NonFiniteTarget,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
