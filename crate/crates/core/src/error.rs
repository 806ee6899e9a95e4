use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular kernel evaluation: zero separation with epsilon = 0")]
    SingularEvaluation,

    /// Unregularized pairwise evaluation found two particles closer than the
    /// configured minimum separation.
    #[error("pair separation {separation:e} fell below the guard {guard:e}")]
    SeparationGuard { separation: f64, guard: f64 },

    #[error("non-finite state at step {step}")]
    Divergence { step: u64 },

    #[error("rejection sampling acceptance rate {rate:e} is below 1e-3")]
    EnvelopeMisfit { rate: f64 },

    #[error("stability guard violated: {0}")]
    Stability(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
