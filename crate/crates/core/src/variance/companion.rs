//! Companion-cluster selection.
//!
//! Each cluster's in-window running-variable values on each side are reduced
//! to at most `L = ⌊R/(4J)⌋` support points. The first companion set collects
//! the clusters owning the `J` closest foreign support points to each of the
//! cluster's own support points; the second does the same after removing the
//! first set.
//!
//! The first step alone uses any cluster at most `4LJ ≤ R` times, but the
//! second step's exclusion sets differ from cluster to cluster and can push
//! the combined count up to `2R`. The second step therefore runs in cluster
//! order and skips candidates that are already companions of `R` clusters,
//! so every cluster serves as a companion for at most `R` others.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};
use crate::estimator::WeightSet;
use crate::neighbors::SortedPoints;
use crate::sample::ClusteredSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompanionConfig {
    /// Neighbors per unit.
    pub j: usize,
    /// Maximum number of clusters any cluster may serve as companion for.
    pub r: usize,
    /// Seed for the mass-point jitter.
    pub seed: u64,
}

impl Default for CompanionConfig {
    fn default() -> Self {
        CompanionConfig { j: 3, r: 36, seed: 0 }
    }
}

impl CompanionConfig {
    pub fn new(j: usize, r: usize) -> CompanionConfig {
        CompanionConfig { j, r, seed: 0 }
    }

    pub fn support_size(&self) -> usize {
        if self.j == 0 {
            0
        } else {
            self.r / (4 * self.j)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanionSelection {
    pub r1: Vec<Vec<usize>>,
    pub r2: Vec<Vec<usize>>,
    /// Support points per side (`[plus, minus]`) per cluster, before jitter.
    pub support: Vec<[Vec<f64>; 2]>,
    pub j: usize,
    pub r: usize,
    pub l: usize,
}

const JITTER_SCALE: f64 = 1e-9;

/// Reduces sorted distinct values to `l` lower empirical quantiles at
/// probabilities `0, 1/(l-1), ..., 1` (the lower median when `l = 1`).
fn reduce_support(distinct: &[f64], l: usize) -> Vec<f64> {
    let count = distinct.len();
    if count <= l {
        return distinct.to_vec();
    }
    if l == 1 {
        return vec![distinct[(count - 1) / 2]];
    }
    (0..l).map(|k| distinct[k * (count - 1) / (l - 1)]).collect()
}

pub fn select_companion_clusters(
    sample: &ClusteredSample,
    weights: &WeightSet,
    cfg: &CompanionConfig,
) -> Result<CompanionSelection> {
    weights.check_shape(sample.n())?;
    if cfg.j == 0 {
        return Err(RdError::InvalidConfig("J must be at least 1".into()));
    }
    let l = cfg.support_size();
    if l < 1 {
        return Err(RdError::InvalidConfig(format!(
            "support size floor(R/(4J)) = floor({}/{}) is below 1",
            cfg.r,
            4 * cfg.j
        )));
    }
    let num_clusters = sample.num_clusters();
    let x = sample.x();

    let mut support: Vec<[Vec<f64>; 2]> = Vec::with_capacity(num_clusters);
    for g in 0..num_clusters {
        let mut sides: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for i in sample.cluster_range(g).filter(|&i| weights.in_window(i)) {
            sides[Side::of(x[i]).index()].push(x[i]);
        }
        for values in sides.iter_mut() {
            values.sort_by(f64::total_cmp);
            values.dedup();
            *values = reduce_support(values, l);
        }
        support.push(sides);
    }

    let required = 2 * cfg.j * l;
    let sd = sample.sd_x();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Pools of (possibly jittered) support values; tags index `owner`, which
    // is laid out cluster by cluster so tag order breaks ties by cluster.
    let mut pools: Vec<SortedPoints> = Vec::with_capacity(2);
    let mut owners: Vec<Vec<usize>> = Vec::with_capacity(2);
    let mut positions: Vec<Vec<Vec<f64>>> = Vec::with_capacity(2);
    for side in Side::BOTH {
        let s = side.index();
        let holders = support.iter().filter(|sp| !sp[s].is_empty()).count();
        if holders > 0 && holders < required {
            return Err(RdError::TooFewClusters { side, found: holders, required });
        }
        let mut flat: Vec<f64> = support.iter().flat_map(|sp| sp[s].iter().copied()).collect();
        let mut sorted = flat.clone();
        sorted.sort_by(f64::total_cmp);
        let mass_points = sorted.windows(2).any(|w| w[0] == w[1]);
        if mass_points {
            for v in flat.iter_mut() {
                *v += JITTER_SCALE * sd * rng.random_range(-1.0..1.0);
            }
        }
        let mut owner = Vec::with_capacity(flat.len());
        let mut pos = Vec::with_capacity(num_clusters);
        let mut k = 0;
        for (g, sp) in support.iter().enumerate() {
            let m = sp[s].len();
            owner.extend(std::iter::repeat_n(g, m));
            pos.push(flat[k..k + m].to_vec());
            k += m;
        }
        pools.push(SortedPoints::new(flat.iter().enumerate().map(|(t, &v)| (v, t)).collect()));
        owners.push(owner);
        positions.push(pos);
    }

    let mut r1: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); num_clusters];
    for (g, first) in r1.iter_mut().enumerate() {
        for side in Side::BOTH {
            let s = side.index();
            for &v in &positions[s][g] {
                for hit in pools[s].nearest(v, cfg.j, false, |t| owners[s][t] != g) {
                    first.insert(owners[s][hit.tag]);
                }
            }
        }
    }
    let mut usage = vec![0usize; num_clusters];
    for c in r1.iter().flatten() {
        usage[*c] += 1;
    }

    let mut r2 = vec![Vec::new(); num_clusters];
    for g in 0..num_clusters {
        let first = &r1[g];
        let mut second = BTreeSet::new();
        for side in Side::BOTH {
            let s = side.index();
            for &v in &positions[s][g] {
                let hits = pools[s].nearest(v, cfg.j, false, |t| {
                    let o = owners[s][t];
                    o != g && !first.contains(&o) && (usage[o] < cfg.r || second.contains(&o))
                });
                if hits.is_empty() {
                    let holders = support.iter().filter(|sp| !sp[s].is_empty()).count();
                    return Err(RdError::TooFewClusters { side, found: holders, required: required.max(holders + 1) });
                }
                second.extend(hits.iter().map(|h| owners[s][h.tag]));
            }
        }
        for &c in &second {
            usage[c] += 1;
        }
        r2[g] = second.into_iter().collect();
    }
    let r1: Vec<Vec<usize>> = r1.into_iter().map(|set| set.into_iter().collect()).collect();

    Ok(CompanionSelection { r1, r2, support, j: cfg.j, r: cfg.r, l })
}

/// `#{g̃ : g ∈ R1_g̃ ∪ R2_g̃}` for every cluster `g`.
pub fn reuse_counts(r1: &[Vec<usize>], r2: &[Vec<usize>]) -> Vec<usize> {
    let mut counts = vec![0; r1.len()];
    for (a, b) in r1.iter().zip(r2) {
        let union: BTreeSet<usize> = a.iter().chain(b).copied().collect();
        for g in union {
            counts[g] += 1;
        }
    }
    counts
}
