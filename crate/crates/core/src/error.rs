use thiserror::Error;

use crate::optim::TrainLog;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{operand}`: expected {expected}, found {found}")]
    DimensionMismatch {
        operand: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid initial distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid policy class: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rollout diverged at step {step} (state norm {norm:e})")]
    UnstableRollout { step: usize, norm: f64 },

    #[error("unstable policy at gamma = {gamma}: cost {cost:e} exceeds the overflow guard")]
    UnstableCost { gamma: f64, cost: f64 },

    #[error(
        "Riccati iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    DareNotConverged { iterations: usize, residual: f64 },

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("assumption 2 violated for this class: representation residual {residual:e}")]
    NotRepresentable { residual: f64 },

    #[error("policy gradient diverged at iteration {iter} (cost {cost:e})")]
    Divergence {
        iter: usize,
        cost: f64,
        log: Box<TrainLog>,
    },

    #[error("at gamma = {gamma}: {source}")]
    AtGamma {
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("homotopy stage {stage} (gamma = {gamma}): {source}")]
    Stage {
        stage: usize,
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at_gamma(gamma: f64, source: Error) -> Self {
        Error::AtGamma {
            gamma,
            source: Box::new(source),
        }
    }

    /// True when the error (or the error it wraps) signals a blown-up rollout or cost.
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::UnstableRollout { .. }
            | Error::UnstableCost { .. }
            | Error::Divergence { .. } => true,
            Error::AtGamma { source, .. } | Error::Stage { source, .. } => source.is_divergence(),
            _ => false,
        }
    }

    /// True when the error originates in the Riccati solver.
    pub fn is_dare_failure(&self) -> bool {
        match self {
            Error::DareNotConverged { .. } | Error::Singular(_) => true,
            Error::AtGamma { source, .. } | Error::Stage { source, .. } => source.is_dare_failure(),
            _ => false,
        }
    }
}

pub(crate) fn check_dim(operand: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            operand,
            expected: expected.to_string(),
            found: found.to_string(),
        })
    }
}
