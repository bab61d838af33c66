use thiserror::Error;

pub type Result<T, E = GerlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GerlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("step {step} out of range for horizon {horizon}")]
    StepOutOfRange { step: usize, horizon: usize },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage game is not zero-sum (max |u1 + u2| = {0:.3e}); use the CCE or CE oracle for general-sum games")]
    NotZeroSum(f64),

    #[error("every candidate assigns zero likelihood to triple #{index} (obs {obs}, action {action}, next {next_obs}); the class does not match the environment")]
    NoFeasibleCandidate {
        index: usize,
        obs: String,
        action: usize,
        next_obs: String,
    },

    #[error("linear system is not positive definite (lambda = {lambda})")]
    Singular { lambda: f64 },

    #[error("step {0} has no data; collect warm-up episodes first")]
    EmptyBuffer(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("joint state space of size {size} exceeds the cap {cap}; reduce players or local states")]
    TooLarge { size: usize, cap: usize },

    #[error("budget exceeded: {0}")]
    Budget(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
