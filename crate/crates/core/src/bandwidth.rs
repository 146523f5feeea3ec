//! Worst-case-MSE bandwidth rule and plug-in variance constants.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};
use crate::kernel::{Kernel, KernelConstants};
use crate::neighbors::SortedPoints;
use crate::sample::ClusteredSample;

/// `h* = (V / (4 M^2 μ̄^2))^{1/5} n^{-1/5}`.
pub fn optimal_bandwidth(v: f64, m: f64, constants: &KernelConstants, n: usize) -> Result<f64> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(RdError::ZeroCurvature(m));
    }
    if !(v > 0.0) || !v.is_finite() {
        return Err(RdError::InvalidInput(format!("variance constant must be positive, got {v}")));
    }
    if constants.mu == 0.0 || !constants.mu.is_finite() {
        return Err(RdError::InvalidInput("kernel bias constant is zero".into()));
    }
    if n == 0 {
        return Err(RdError::EmptyInput);
    }
    let ratio = v / (4.0 * m * m * constants.mu * constants.mu);
    Ok(ratio.powf(0.2) * (n as f64).powf(-0.2))
}

/// `1.84 · sd(x) · n^{-1/5}`.
pub fn default_pilot_bandwidth(sample: &ClusteredSample) -> f64 {
    1.84 * sample.sd_x() * (sample.n() as f64).powf(-0.2)
}

pub const MIN_PILOT_PER_SIDE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlugInConstants {
    pub h_pilot: f64,
    pub density_at_cutoff: f64,
    /// `σ̂²(0⁺), σ̂²(0⁻)`.
    pub variance: [f64; 2],
    /// `σ̂(0⁺,0⁺), σ̂(0⁻,0⁻)`.
    pub covariance: [f64; 2],
    /// `Σ_g n_g (n_g - 1) / n`.
    pub cluster_factor: f64,
    pub v1: f64,
    pub v2: f64,
}

/// Estimates the constants `V₁ = κ̄/f(0) Σ★ σ²(0★)` and
/// `V₂ = κ̄/f(0) Σ★ (σ²(0★) + σ(0★,0★) Σ_g n_g(n_g-1)/n)`.
///
/// `f(0)` is a triangular kernel density estimate at the cutoff. Variances and
/// within-cluster covariances come from nearest-neighbor residuals of the
/// same-side units within the pilot window, with neighbors drawn from other
/// clusters so that the residual products are free of own-cluster terms.
pub fn plug_in_variance_constants(
    sample: &ClusteredSample,
    kernel: &Kernel,
    h_pilot: f64,
    neighbors: usize,
) -> Result<PlugInConstants> {
    if !(h_pilot.is_finite() && h_pilot > 0.0) {
        return Err(RdError::InvalidBandwidth(h_pilot));
    }
    if neighbors == 0 {
        return Err(RdError::InvalidConfig("number of neighbors must be at least 1".into()));
    }
    let constants = kernel.constants()?;
    let n = sample.n() as f64;
    let x = sample.x();
    let y = sample.y();

    let density_at_cutoff = x.iter().map(|&v| Kernel::Triangular.eval(v / h_pilot)).sum::<f64>() / (n * h_pilot);

    let mut variance = [0.0; 2];
    let mut covariance = [0.0; 2];
    for side in Side::BOTH {
        let local: Vec<usize> = (0..sample.n()).filter(|&i| x[i].abs() <= h_pilot && Side::of(x[i]) == side).collect();
        if local.len() < MIN_PILOT_PER_SIDE {
            return Err(RdError::InsufficientSupport { side, found: local.len(), required: MIN_PILOT_PER_SIDE });
        }
        let pool = SortedPoints::new(local.iter().map(|&i| (x[i], i)).collect());
        let residual = |i: usize, excluded: &HashSet<usize>| -> Option<(f64, Vec<usize>)> {
            let hits = pool.nearest(x[i], neighbors, false, |j| !excluded.contains(&sample.cluster_of(j)));
            if hits.len() < neighbors {
                return None;
            }
            let mean = hits.iter().map(|h| y[h.tag]).sum::<f64>() / hits.len() as f64;
            Some((y[i] - mean, hits.iter().map(|h| sample.cluster_of(h.tag)).collect()))
        };

        let factor = neighbors as f64 / (neighbors as f64 + 1.0);
        let mut sq = 0.0;
        let mut count = 0usize;
        let mut by_cluster: Vec<Vec<usize>> = vec![Vec::new(); sample.num_clusters()];
        for &i in &local {
            by_cluster[sample.cluster_of(i)].push(i);
        }
        let mut cross = 0.0;
        let mut pairs = 0usize;
        for (g, members) in by_cluster.iter().enumerate() {
            for &i in members {
                let own: HashSet<usize> = [g].into_iter().collect();
                let Some((e1, used)) = residual(i, &own) else { continue };
                sq += factor * e1 * e1;
                count += 1;
                if members.len() < 2 {
                    continue;
                }
                let mut excluded = own;
                excluded.extend(used);
                for &j in members.iter().filter(|&&j| j != i) {
                    if let Some((e2, _)) = residual(j, &excluded) {
                        cross += e1 * e2;
                        pairs += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Err(RdError::InsufficientNeighbors { side, found: local.len(), required: neighbors + 1 });
        }
        variance[side.index()] = sq / count as f64;
        covariance[side.index()] = if pairs > 0 { cross / pairs as f64 } else { 0.0 };
    }

    let cluster_factor: f64 =
        sample.cluster_sizes().iter().map(|&s| (s * s.saturating_sub(1)) as f64).sum::<f64>() / n;
    let scale = constants.kappa / density_at_cutoff;
    let v1 = scale * (variance[0] + variance[1]);
    let v2 = scale * (variance[0] + variance[1] + cluster_factor * (covariance[0] + covariance[1]));
    Ok(PlugInConstants { h_pilot, density_at_cutoff, variance, covariance, cluster_factor, v1, v2 })
}
