use thiserror::Error;

use crate::value::ValueField;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index out of bounds: {0}")]
    Index(String),

    #[error("model validation failed: {0}")]
    ModelValidation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<ValueField>,
    },

    #[error("enumeration budget exceeded: {needed} > {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("normalization undefined: reference scores {low} and {target} coincide")]
    UndefinedNormalization { low: f64, target: f64 },

    #[error("drift bound violated: {0}")]
    Drift(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Index(_) => "index",
            Error::ModelValidation(_) => "model_validation",
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Numerical(_) => "numerical",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Budget { .. } => "budget",
            Error::Precondition(_) => "precondition",
            Error::Shape(_) => "shape",
            Error::UndefinedNormalization { .. } => "undefined_normalization",
            Error::Drift(_) => "drift",
            Error::Json(_) => "json",
        }
    }
}
