//! Cluster-blind nearest-neighbor estimators.

use super::SeEstimate;
use crate::error::{RdError, Result, Side};
use crate::estimator::WeightSet;
use crate::neighbors::SortedPoints;
use crate::sample::ClusteredSample;

/// `sqrt(J/(J+1)) (Y_i - mean of the J nearest same-side in-window units)`,
/// zero outside the window. Neighbors may come from any cluster, including
/// the unit's own.
pub fn nn_residuals(sample: &ClusteredSample, weights: &WeightSet, j: usize) -> Result<Vec<f64>> {
    weights.check_shape(sample.n())?;
    if j == 0 {
        return Err(RdError::InvalidConfig("number of neighbors must be at least 1".into()));
    }
    let x = sample.x();
    let y = sample.y();
    let mut out = vec![0.0; sample.n()];
    for side in Side::BOTH {
        let members: Vec<usize> = (0..sample.n()).filter(|&i| weights.in_window(i) && Side::of(x[i]) == side).collect();
        if members.len() < j + 1 {
            return Err(RdError::InsufficientNeighbors { side, found: members.len(), required: j + 1 });
        }
        let pool = SortedPoints::new(members.iter().map(|&i| (x[i], i)).collect());
        for &i in &members {
            let hits = pool.nearest(x[i], j, false, |t| t != i);
            let mean = hits.iter().map(|h| y[h.tag]).sum::<f64>() / hits.len() as f64;
            let m = hits.len() as f64;
            out[i] = (m / (m + 1.0)).sqrt() * (y[i] - mean);
        }
    }
    Ok(out)
}

/// Classical i.i.d. nearest-neighbor standard error:
/// `Σ_i w_i² · J/(J+1) · (Y_i - Ȳ_{N(i)})²`.
pub fn se_nn_iid(sample: &ClusteredSample, weights: &WeightSet, j: usize) -> Result<SeEstimate> {
    let r = nn_residuals(sample, weights, j)?;
    let se2 = weights.w.iter().zip(&r).map(|(w, e)| (w * e).powi(2)).sum();
    Ok(SeEstimate::from_se2(se2))
}

/// Nearest-neighbor residuals plugged into the clustered double sum,
/// `Σ_g (Σ_i w_gi Y^Δ_gi)²`. Inconsistent in general; kept as a baseline.
pub fn se_naive_cnn(sample: &ClusteredSample, weights: &WeightSet, j: usize) -> Result<SeEstimate> {
    let r = nn_residuals(sample, weights, j)?;
    let se2 = (0..sample.num_clusters())
        .map(|g| sample.cluster_range(g).map(|i| weights.w[i] * r[i]).sum::<f64>().powi(2))
        .sum();
    Ok(SeEstimate::from_se2(se2))
}
