//! Cluster-influence rule of thumb.
//!
//! `w_ratio_g = Σ_{i,j ∈ g} |w_gi w_gj| / Σ_i w_i²`, summarized by its maximum
//! and its sum over clusters and compared against thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};
use crate::estimator::WeightSet;
use crate::sample::ClusteredSample;

pub const DEFAULT_ETA_MAX: f64 = 0.1;
pub const DEFAULT_ETA_SUM: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Clusters small and balanced enough for the small-cluster frameworks.
    #[serde(rename = "frameworks_I_II_plausible")]
    SmallClusters,
    #[serde(rename = "large_cluster_regime")]
    LargeClusters,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::SmallClusters => "frameworks_I_II_plausible",
            Verdict::LargeClusters => "large_cluster_regime",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnostics {
    pub w_ratio: Vec<f64>,
    pub w_max: f64,
    pub w_sum: f64,
    pub eta_max: f64,
    pub eta_sum: f64,
    pub verdict: Option<Verdict>,
}

pub fn cluster_weight_ratios(sample: &ClusteredSample, weights: &WeightSet) -> Result<ClusterDiagnostics> {
    weights.check_shape(sample.n())?;
    let total: f64 = weights.w.iter().map(|w| w * w).sum();
    if total == 0.0 {
        return Err(RdError::ZeroWeights);
    }
    let mut w_ratio = Vec::with_capacity(sample.num_clusters());
    let mut w_max = 0.0f64;
    let mut w_sum = 0.0;
    for g in 0..sample.num_clusters() {
        // Σ_{i,j} |w_i w_j| = (Σ_i |w_i|)²
        let abs_sum: f64 = sample.cluster_range(g).map(|i| weights.w[i].abs()).sum();
        let ratio = abs_sum * abs_sum / total;
        w_max = w_max.max(ratio);
        w_sum += ratio;
        w_ratio.push(ratio);
    }
    Ok(ClusterDiagnostics {
        w_ratio,
        w_max,
        w_sum,
        eta_max: DEFAULT_ETA_MAX,
        eta_sum: DEFAULT_ETA_SUM,
        verdict: None,
    })
}

/// Inclusive threshold comparison.
pub fn rule_of_thumb(w_max: f64, w_sum: f64, eta_max: f64, eta_sum: f64) -> Verdict {
    if w_max <= eta_max && w_sum <= eta_sum {
        Verdict::SmallClusters
    } else {
        Verdict::LargeClusters
    }
}

impl ClusterDiagnostics {
    pub fn with_verdict(mut self, eta_max: f64, eta_sum: f64) -> ClusterDiagnostics {
        self.eta_max = eta_max;
        self.eta_sum = eta_sum;
        self.verdict = Some(rule_of_thumb(self.w_max, self.w_sum, eta_max, eta_sum));
        self
    }
}
