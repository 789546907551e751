use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("degenerate state: {0}")]
    DegenerateState(String),
    #[error("state outside the chamber: {0}")]
    OutsideChamber(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("convergence failure: {0}")]
    ConvergenceFailure(String),
    #[error("step size underflow at t = {time}, state {state:?}")]
    StepSizeUnderflow { time: f64, state: Vec<f64> },
    #[error("polynomial has non-real roots (imaginary part {0:e})")]
    NonRealRoots(f64),
    #[error("path left the sanity envelope at t = {time}")]
    StepExplosion { time: f64 },
    #[error("insufficient paths: {0} (need at least 100)")]
    InsufficientPaths(usize),
}

pub type Result<T> = std::result::Result<T, LabError>;
