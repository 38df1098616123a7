use thiserror::Error;

/// Errors raised across the identification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("chain failure at iteration {iteration}: {reason}")]
    ChainFailure { iteration: usize, reason: String },

    #[error("sampling round {round} failed: {source}")]
    RoundFailure {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("degenerate entry: mode estimate of basis {basis} for state {dim} is exactly zero")]
    DegenerateEntry { basis: usize, dim: usize },

    #[error("credible band unavailable: all {0} reconstructions diverged")]
    BandUnavailable(usize),

    #[error("oracle miss: {0}")]
    OracleMiss(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True when the error originates from a failed Markov chain, possibly
    /// wrapped in a round context.
    pub fn is_chain_failure(&self) -> bool {
        match self {
            Error::ChainFailure { .. } => true,
            Error::RoundFailure { source, .. } => source.is_chain_failure(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
