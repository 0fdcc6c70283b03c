use thiserror::Error;

use crate::field::CriticalPoint;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate minima: {0}")]
    DegenerateMinima(String),

    #[error("invalid endpoint {0:?}: coordinates must be nonnegative")]
    InvalidEndpoint(Vec<f64>),

    #[error("optimizer did not converge{}: relative decrease {rel_decrease:.3e} after {iterations} iterations", pair.map(|(i, j)| format!(" for pair ({}, {})", i + 1, j + 1)).unwrap_or_default())]
    NonConvergence {
        pair: Option<(usize, usize)>,
        iterations: usize,
        rel_decrease: f64,
    },

    #[error("constrained flow stopped at residual {:.3e} after {iterations} iterations", partial.residual_norm)]
    FlowNonConvergence {
        iterations: usize,
        partial: Box<CriticalPoint>,
    },

    #[error("energy became non-finite at iteration {0}")]
    Blowup(usize),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("interior of the cluster is empty")]
    EmptyInterior,

    #[error("chamber {0} has no boundary")]
    EmptyBoundary(usize),

    #[error("negative volume component {0}")]
    NegativeVolume(f64),

    #[error("regularization tau must be positive, got {0}")]
    BadTau(f64),

    #[error("volume {0:?} too large for the canonical cluster")]
    VolumeTooLarge(Vec<f64>),

    #[error("zero mass: the field vanishes identically")]
    ZeroMass,

    #[error("config error in `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}
