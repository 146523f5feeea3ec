use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Side of the cutoff. `x = 0` belongs to the treated (`Plus`) side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Plus, Side::Minus];

    #[inline]
    pub fn of(x: f64) -> Side {
        if x >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Side::Plus => 0,
            Side::Minus => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Plus => f.write_str("above cutoff"),
            Side::Minus => f.write_str("below cutoff"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RdError {
    #[error("input contains no observations")]
    EmptyInput,
    #[error("non-finite value in row {row}")]
    NonFiniteValue { row: usize },
    #[error("cutoff must be finite")]
    NonFiniteCutoff,
    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel is degenerate: mu2*mu0 - mu1^2 = {0:e}")]
    DegenerateKernel(f64),
    #[error("insufficient support {side}: {found} usable observations, need {required}")]
    InsufficientSupport { side: Side, found: usize, required: usize },
    #[error("degenerate design {side}: all in-window running-variable values coincide")]
    DegenerateDesign { side: Side },
    #[error("shape mismatch: expected {expected} entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("second-derivative bound M must be nonnegative, got {0}")]
    NegativeM(f64),
    #[error("curvature bound must be positive for a finite optimal bandwidth, got {0}")]
    ZeroCurvature(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient neighbors {side}: {found} in-window observations, need {required}")]
    InsufficientNeighbors { side: Side, found: usize, required: usize },
    #[error("too few clusters {side}: {found} with in-window support, need {required}")]
    TooFewClusters { side: Side, found: usize, required: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no eligible neighbor for observation {index} of cluster {cluster} in neighbor set {set}")]
    NoEligibleNeighbor { cluster: usize, index: usize, set: u8 },
    #[error("neighbor plan does not cover observation {0} with nonzero weight")]
    IncompletePlan(usize),
    #[error("covariance block of cluster {cluster} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { cluster: usize, min_eigenvalue: f64 },
    #[error("all weights are zero")]
    ZeroWeights,
    #[error("all {0} replications failed")]
    AllReplicationsFailed(usize),
}

impl RdError {
    /// Errors that stem from the data not supporting the requested estimate,
    /// as opposed to malformed input or configuration.
    pub fn is_estimation_precondition(&self) -> bool {
        matches!(
            self,
            RdError::InsufficientSupport { .. }
                | RdError::DegenerateDesign { .. }
                | RdError::InsufficientNeighbors { .. }
                | RdError::TooFewClusters { .. }
                | RdError::NoEligibleNeighbor { .. }
                | RdError::IncompletePlan(_)
                | RdError::ZeroWeights
                | RdError::ZeroCurvature(_)
        )
    }

    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            RdError::EmptyInput => "empty_input",
            RdError::NonFiniteValue { .. } => "non_finite_value",
            RdError::NonFiniteCutoff => "non_finite_cutoff",
            RdError::InvalidBandwidth(_) => "invalid_bandwidth",
            RdError::InvalidKernel(_) => "invalid_kernel",
            RdError::DegenerateKernel(_) => "degenerate_kernel",
            RdError::InsufficientSupport { .. } => "insufficient_support",
            RdError::DegenerateDesign { .. } => "degenerate_design",
            RdError::ShapeMismatch { .. } => "shape_mismatch",
            RdError::NegativeM(_) => "negative_m",
            RdError::ZeroCurvature(_) => "zero_curvature",
            RdError::InvalidInput(_) => "invalid_input",
            RdError::InsufficientNeighbors { .. } => "insufficient_neighbors",
            RdError::TooFewClusters { .. } => "too_few_clusters",
            RdError::InvalidConfig(_) => "invalid_config",
            RdError::NoEligibleNeighbor { .. } => "no_eligible_neighbor",
            RdError::IncompletePlan(_) => "incomplete_plan",
            RdError::NotPositiveSemidefinite { .. } => "not_positive_semidefinite",
            RdError::ZeroWeights => "zero_weights",
            RdError::AllReplicationsFailed(_) => "all_replications_failed",
        }
    }
}

pub type Result<T> = std::result::Result<T, RdError>;
