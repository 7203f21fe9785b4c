use thiserror::Error;

use crate::Vector;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite input coordinate")]
    NonFinite,

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid weight matrix: {0}")]
    InvalidWeights(String),

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("horizon {horizon} too small: {reason}")]
    HorizonTooSmall { horizon: usize, reason: String },

    #[error("invalid spectral input: {0}")]
    InvalidSpectral(String),

    #[error("invalid constraint set: {0}")]
    InvalidSet(String),

    #[error("constraint family infeasible: {0}")]
    Infeasible(String),

    /// Dykstra's method hit its cycle cap; `best` is the last iterate.
    #[error("intersection projection stopped after {iterations} cycles (residual {residual:e})")]
    IntersectionCap {
        iterations: usize,
        residual: f64,
        best: Vector,
    },

    #[error("invalid cost function: {0}")]
    InvalidCost(String),

    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),

    #[error("agent {agent} has eigenvector estimate z_ii = {value:e}; state is corrupted")]
    CorruptEstimate { agent: usize, value: f64 },

    #[error("agent {agent} diverged (norm {norm:e}); step sizes or assumptions are violated")]
    Diverged { agent: usize, norm: f64 },

    #[error("round {round}: {source}")]
    Round { round: usize, source: Box<Error> },

    #[error("{phase}: {source}")]
    Phase { phase: String, source: Box<Error> },

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_phase(self, phase: impl Into<String>) -> Self {
        Error::Phase {
            phase: phase.into(),
            source: Box::new(self),
        }
    }

    pub fn at_round(self, round: usize) -> Self {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }

    /// True for errors that mean the configured problem breaks a standing
    /// assumption (as opposed to I/O or numerical trouble).
    pub fn is_assumption_violation(&self) -> bool {
        match self {
            Error::InvalidGraph(_)
            | Error::InvalidWeights(_)
            | Error::Infeasible(_)
            | Error::InvalidSet(_)
            | Error::InvalidCost(_)
            | Error::InvalidSchedule(_) => true,
            Error::Phase { source, .. } | Error::Round { source, .. } => {
                source.is_assumption_violation()
            }
            _ => false,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_finite(x: &Vector) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}
