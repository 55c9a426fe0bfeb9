use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("measurement ensemble must contain at least one measurement")]
    EmptyEnsemble,

    #[error("iterate became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("rank-{s} solver did not reach tolerance (best gradient norm {best_grad_norm:e})")]
    NonConvergence { s: usize, best_grad_norm: f64 },

    #[error("unsupported ground-truth mode: {0}")]
    UnsupportedMode(String),

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("column `{column}`: {detail}")]
    Schema { column: String, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
