use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("placement infeasible: {requested} objects requested, grid holds {capacity}")]
    PlacementInfeasible { requested: usize, capacity: usize },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid bundle {path}: {reason}")]
    InvalidBundle { path: String, reason: String },

    #[error(transparent)]
    Pipeline(#[from] distill_core::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
