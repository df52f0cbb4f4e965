use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::solvers::DivergenceReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),

    #[error("parameter layouts are not shape-compatible: {0}")]
    Incompatible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {variable} at step {step}")]
    NonFinite { variable: &'static str, step: u64 },

    #[error("iterate diverged at step {}: norm {} exceeds bound {}", .0.step, .0.norm, .0.bound)]
    Divergence(Box<DivergenceReport>),

    #[error("equilibrium is not unique for lambda={lambda}, beta={beta}")]
    NonUnique { lambda: f64, beta: f64 },

    #[error("retraining diverged at epoch {epoch}")]
    RetrainDiverged { epoch: usize },

    #[error("malformed trajectory CSV at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
