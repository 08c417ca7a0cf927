use thiserror::Error;

use crate::neighborhood::Infeasibility;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("infeasible neighborhood budget: {0}")]
    Budget(Infeasibility),

    #[error("problem too large for exhaustive enumeration: {pairs} candidate pairs (limit {limit})")]
    TooLarge { pairs: usize, limit: usize },

    #[error("optimizer diverged after {iteration} iterations (non-finite loss)")]
    Divergence {
        iteration: usize,
        /// Last metric with a finite loss, row-major.
        last_valid: Vec<f64>,
    },

    #[error("fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("no grid candidate could be evaluated")]
    EmptyGrid,

    #[error("{0}: no data rows")]
    EmptyDataset(String),

    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
