use adyn_core::AnalysisError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("carrying capacity K = {0} must be at least 2")]
    InvalidK(u64),
    #[error("initial state has {got} entries, model has {expected} traits")]
    BadInitial { expected: usize, got: usize },
    #[error("total event rate {total:e} exceeds the overflow guard at t = {time}")]
    RateOverflow { time: f64, total: f64 },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
