use thiserror::Error;

/// Errors raised by the solver core and the gradient pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("label time {time} is not on a grid node (nearest node {nearest} at distance {distance:e})")]
    LabelOffGrid { time: f64, nearest: f64, distance: f64 },

    #[error("invalid loss: {0}")]
    InvalidLoss(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("integration failure: non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("invalid scheme: {0}")]
    InvalidScheme(String),

    #[error("unknown scheme `{0}` (expected one of euler, heun, rk4, ab2)")]
    UnknownScheme(String),

    #[error("grid has {n_steps} steps but the scheme needs at least {needed}")]
    TooFewSteps { n_steps: usize, needed: usize },

    #[error("vector field does not supply dense Jacobians")]
    MissingJacobian,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("trajectory is missing step records: {0}")]
    MissingRecords(String),

    #[error("window mismatch: {0}")]
    Window(String),

    #[error("finite-difference oracle: non-finite loss for parameter {index}")]
    NonFiniteLoss { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
