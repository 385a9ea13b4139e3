use thiserror::Error;

#[derive(Debug, Error)]
pub enum HdpError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty cell")]
    EmptyCell,

    #[error("non-physical state in cell {cell}: {what}")]
    NonPhysical { cell: usize, what: String },

    #[error("coarse-particle constraint violated in cell {cell}: N_c = {n_c} < N_d = {n_d}")]
    CoarseConstraint { cell: usize, n_c: usize, n_d: usize },

    #[error("histogram binning mismatch: {0}")]
    Binning(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HdpError>;
