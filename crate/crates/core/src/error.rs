use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("topology error: {0}")]
    Topology(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("case validation failed: {0}")]
    Validation(String),

    #[error("power flow did not converge after {iterations} iterations (last residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("solver reported an infeasible model: {0}")]
    Infeasible(String),

    /// Time limit hit. `incumbent` carries the best objective found, if any.
    #[error("solver time limit reached (incumbent: {incumbent:?})")]
    Timeout { incumbent: Option<f64> },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("refusing to enumerate {0} samples (limit is {1})")]
    TooLarge(usize, usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps the error with the pipeline stage it came from.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
