//! Clustered nearest-neighbor (CNN) variance estimator.
//!
//! Unit `i` of cluster `g` gets two neighbor sets, drawn from the disjoint
//! companion sets `R1_g` and `R2_g`. The product `Y^Δ1_gi · Y^Δ2_gj` of the
//! two neighbor-differenced outcomes is then unbiased for `σ_g,ij` up to the
//! local variation of the regression function, with no correction factor.

use serde::{Deserialize, Serialize};

use super::companion::CompanionSelection;
use super::SeEstimate;
use crate::error::{RdError, Result, Side};
use crate::estimator::WeightSet;
use crate::neighbors::SortedPoints;
use crate::sample::ClusteredSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborPlan {
    pub j: usize,
    pub r: usize,
    pub l: usize,
    pub r1: Vec<Vec<usize>>,
    pub r2: Vec<Vec<usize>>,
    /// Flat indices of the first/second neighbor set of every observation;
    /// empty outside the window.
    pub n1: Vec<Vec<usize>>,
    pub n2: Vec<Vec<usize>>,
}

/// For every in-window unit, the `J` nearest same-side in-window units from
/// the companion clusters of its own cluster, plus any units tied at the
/// `J`-th distance.
pub fn build_neighbor_sets(
    sample: &ClusteredSample,
    weights: &WeightSet,
    selection: &CompanionSelection,
) -> Result<NeighborPlan> {
    weights.check_shape(sample.n())?;
    let num_clusters = sample.num_clusters();
    if selection.r1.len() != num_clusters || selection.r2.len() != num_clusters {
        return Err(RdError::ShapeMismatch { expected: num_clusters, found: selection.r1.len() });
    }
    let x = sample.x();
    let j = selection.j;
    let mut n1 = vec![Vec::new(); sample.n()];
    let mut n2 = vec![Vec::new(); sample.n()];

    for g in 0..num_clusters {
        for side in Side::BOTH {
            let units: Vec<usize> = sample
                .cluster_range(g)
                .filter(|&i| weights.in_window(i) && Side::of(x[i]) == side)
                .collect();
            if units.is_empty() {
                continue;
            }
            for (set, companions, out) in [(1u8, &selection.r1[g], &mut n1), (2u8, &selection.r2[g], &mut n2)] {
                let pool = SortedPoints::new(
                    companions
                        .iter()
                        .flat_map(|&c| sample.cluster_range(c))
                        .filter(|&t| weights.in_window(t) && Side::of(x[t]) == side)
                        .map(|t| (x[t], t))
                        .collect(),
                );
                for &i in &units {
                    let hits = pool.nearest(x[i], j, true, |_| true);
                    if hits.len() < j {
                        let (cluster, index) = sample.locate(i);
                        return Err(RdError::NoEligibleNeighbor { cluster, index, set });
                    }
                    out[i] = hits.iter().map(|h| h.tag).collect();
                }
            }
        }
    }

    Ok(NeighborPlan {
        j,
        r: selection.r,
        l: selection.l,
        r1: selection.r1.clone(),
        r2: selection.r2.clone(),
        n1,
        n2,
    })
}

fn check_plan(sample: &ClusteredSample, weights: &WeightSet, plan: &NeighborPlan) -> Result<()> {
    weights.check_shape(sample.n())?;
    if plan.n1.len() != sample.n() || plan.n2.len() != sample.n() {
        return Err(RdError::ShapeMismatch { expected: sample.n(), found: plan.n1.len().min(plan.n2.len()) });
    }
    if let Some(i) = (0..sample.n()).find(|&i| weights.w[i] != 0.0 && (plan.n1[i].is_empty() || plan.n2[i].is_empty())) {
        return Err(RdError::IncompletePlan(i));
    }
    Ok(())
}

fn differenced(y: &[f64], i: usize, set: &[usize]) -> f64 {
    y[i] - set.iter().map(|&t| y[t]).sum::<f64>() / set.len() as f64
}

/// `Σ_g (Σ_i w_gi Y^Δ1_gi)(Σ_j w_gj Y^Δ2_gj)`. The raw value can be negative;
/// see [`SeEstimate`].
pub fn se_cnn(sample: &ClusteredSample, weights: &WeightSet, plan: &NeighborPlan) -> Result<SeEstimate> {
    check_plan(sample, weights, plan)?;
    let y = sample.y();
    let mut se2 = 0.0;
    for g in 0..sample.num_clusters() {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in sample.cluster_range(g) {
            let w = weights.w[i];
            if w == 0.0 {
                continue;
            }
            a += w * differenced(y, i, &plan.n1[i]);
            b += w * differenced(y, i, &plan.n2[i]);
        }
        se2 += a * b;
    }
    Ok(SeEstimate::from_se2(se2))
}

/// Largest running-variable distance between a nonzero-weight unit and any of
/// its matched neighbors.
pub fn neighbor_distance_diag(sample: &ClusteredSample, weights: &WeightSet, plan: &NeighborPlan) -> f64 {
    let x = sample.x();
    (0..sample.n().min(plan.n1.len()).min(plan.n2.len()))
        .filter(|&i| weights.w[i] != 0.0)
        .flat_map(|i| plan.n1[i].iter().chain(&plan.n2[i]).map(move |&t| (x[i] - x[t]).abs()))
        .fold(0.0, f64::max)
}

/// Serializable view of a plan keyed by cluster ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDump {
    pub j: usize,
    pub r: usize,
    pub l: usize,
    pub clusters: Vec<ClusterCompanions>,
    pub units: Vec<UnitNeighbors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCompanions {
    pub cluster: String,
    pub r1: Vec<String>,
    pub r2: Vec<String>,
}

/// Neighbors are `(cluster id, within-cluster index)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitNeighbors {
    pub cluster: String,
    pub index: usize,
    pub n1: Vec<(String, usize)>,
    pub n2: Vec<(String, usize)>,
}

impl NeighborPlan {
    pub fn dump(&self, sample: &ClusteredSample) -> PlanDump {
        let id = |g: usize| sample.cluster_id(g).to_string();
        let unit = |t: usize| {
            let (g, i) = sample.locate(t);
            (id(g), i)
        };
        let clusters = (0..self.r1.len())
            .map(|g| ClusterCompanions {
                cluster: id(g),
                r1: self.r1[g].iter().map(|&c| id(c)).collect(),
                r2: self.r2[g].iter().map(|&c| id(c)).collect(),
            })
            .collect();
        let units = (0..self.n1.len())
            .filter(|&t| !self.n1[t].is_empty() || !self.n2[t].is_empty())
            .map(|t| {
                let (cluster, index) = unit(t);
                UnitNeighbors {
                    cluster,
                    index,
                    n1: self.n1[t].iter().map(|&s| unit(s)).collect(),
                    n2: self.n2[t].iter().map(|&s| unit(s)).collect(),
                }
            })
            .collect();
        PlanDump { j: self.j, r: self.r, l: self.l, clusters, units }
    }
}
