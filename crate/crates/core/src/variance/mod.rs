//! Conditional variance of `τ̂` and its estimators.
//!
//! Every estimator has the form `Σ_g Σ_{i,j ∈ g} w_gi w_gj σ̂_g,ij` and
//! differs only in how the within-cluster covariances are estimated.

mod cnn;
mod companion;
mod nn;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::estimator::{LocalFit, WeightSet};
use crate::sample::ClusteredSample;

pub use cnn::{build_neighbor_sets, neighbor_distance_diag, se_cnn, NeighborPlan, PlanDump};
pub use companion::{reuse_counts, select_companion_clusters, CompanionConfig, CompanionSelection};
pub use nn::{nn_residuals, se_naive_cnn, se_nn_iid};

/// A variance estimate. `se2` is the raw estimate and may be negative for
/// product-residual estimators; `se` is `sqrt(max(se2, 0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeEstimate {
    pub se2: f64,
    pub se: f64,
    pub negative: bool,
}

impl SeEstimate {
    pub fn from_se2(se2: f64) -> SeEstimate {
        SeEstimate { se2, se: se2.max(0.0).sqrt(), negative: se2 < 0.0 }
    }
}

/// Known per-cluster covariance matrices `Σ_g`, in sample cluster order.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaOracle {
    blocks: Vec<DMatrix<f64>>,
}

const PSD_FLOOR: f64 = -1e-10;

impl SigmaOracle {
    pub fn new(blocks: Vec<DMatrix<f64>>) -> Result<SigmaOracle> {
        for (g, b) in blocks.iter().enumerate() {
            if !b.is_square() || b.nrows() == 0 {
                return Err(RdError::InvalidInput(format!("covariance block {g} must be square and nonempty")));
            }
            let scale = b.amax().max(1.0);
            if (b - b.transpose()).amax() > 1e-12 * scale {
                return Err(RdError::InvalidInput(format!("covariance block {g} is not symmetric")));
            }
            let min_eigenvalue = b.clone().symmetric_eigenvalues().min();
            if min_eigenvalue < PSD_FLOOR {
                return Err(RdError::NotPositiveSemidefinite { cluster: g, min_eigenvalue });
            }
        }
        Ok(SigmaOracle { blocks })
    }

    /// `σ² ((1 - ρ) I + ρ 11ᵀ)` for every cluster.
    ///
    /// PSD by construction for `ρ ∈ [0, 1]`, so the eigenvalue check is skipped.
    pub fn exchangeable(sizes: &[usize], sigma2: f64, rho: f64) -> Result<SigmaOracle> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) || !(0.0..=1.0).contains(&rho) {
            return Err(RdError::InvalidInput(format!("exchangeable covariance needs sigma2 >= 0 and rho in [0, 1], got {sigma2}, {rho}")));
        }
        let blocks = sizes
            .iter()
            .map(|&m| DMatrix::from_fn(m, m, |i, j| if i == j { sigma2 } else { sigma2 * rho }))
            .collect();
        Ok(SigmaOracle { blocks })
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn n(&self) -> usize {
        self.blocks.iter().map(|b| b.nrows()).sum()
    }
}

/// `se(h)` from `se²(h) = Σ_g Σ_{i,j} w_gi w_gj σ_g,ij`.
pub fn oracle_conditional_se(weights: &WeightSet, sigma: &SigmaOracle) -> Result<f64> {
    Ok(oracle_conditional_se2(weights, sigma)?.max(0.0).sqrt())
}

/// The conditional variance itself; rounding noise above `-1e-14` is floored
/// at zero.
pub fn oracle_conditional_se2(weights: &WeightSet, sigma: &SigmaOracle) -> Result<f64> {
    weights.check_shape(sigma.n())?;
    let mut total = 0.0;
    let mut start = 0;
    for block in &sigma.blocks {
        let m = block.nrows();
        let w = &weights.w[start..start + m];
        start += m;
        if w.iter().all(|&v| v == 0.0) {
            continue;
        }
        for i in 0..m {
            if w[i] == 0.0 {
                continue;
            }
            for j in 0..m {
                total += w[i] * w[j] * block[(i, j)];
            }
        }
    }
    if total < 0.0 && total > -1e-14 {
        total = 0.0;
    }
    Ok(total)
}

/// Heteroskedasticity-robust, cluster-blind: `Σ w_i² ε̂_i²`.
pub fn se_ehw(weights: &WeightSet, residuals: &[f64]) -> Result<SeEstimate> {
    weights.check_shape(residuals.len())?;
    let se2 = weights.w.iter().zip(residuals).map(|(w, e)| (w * e).powi(2)).sum();
    Ok(SeEstimate::from_se2(se2))
}

/// Clustered regression-residual estimator `Σ_g (Σ_i w_gi ε̂_gi)²`, with
/// residuals from the same local linear fit as the weights.
pub fn se_crr(sample: &ClusteredSample, weights: &WeightSet, fit: &LocalFit) -> Result<SeEstimate> {
    weights.check_shape(sample.n())?;
    let residuals = fit.residuals(sample);
    se_crr_from_residuals(sample, weights, &residuals)
}

pub fn se_crr_from_residuals(sample: &ClusteredSample, weights: &WeightSet, residuals: &[f64]) -> Result<SeEstimate> {
    weights.check_shape(sample.n())?;
    weights.check_shape(residuals.len())?;
    let se2 = (0..sample.num_clusters())
        .map(|g| {
            sample
                .cluster_range(g)
                .map(|i| weights.w[i] * residuals[i])
                .sum::<f64>()
                .powi(2)
        })
        .sum();
    Ok(SeEstimate::from_se2(se2))
}
