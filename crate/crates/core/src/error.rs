use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the density estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("diffusion tensor is not positive definite at cell ({i}, {j}): {sigma:?}")]
    NotPositiveDefinite {
        i: usize,
        j: usize,
        sigma: [[f64; 2]; 2],
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("time step {dt} exceeds the stability bound {dt_max}")]
    StepSize { dt: f64, dt_max: f64 },

    #[error("reflection of agent {agent} did not terminate; time step too large")]
    Reflection { agent: usize },

    #[error("numerical health check failed at step {step}: {reason}")]
    NumericalHealth { step: usize, reason: String },

    #[error("degenerate field: {0}")]
    DegenerateField(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn health(reason: impl Into<String>) -> Self {
        Error::NumericalHealth {
            step: 0,
            reason: reason.into(),
        }
    }

    /// Attaches a step index to a numerical health error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::NumericalHealth { reason, .. } => Error::NumericalHealth { step, reason },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
