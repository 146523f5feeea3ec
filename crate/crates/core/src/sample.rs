//! Clustered running-variable/outcome data and window configuration.
//!
//! Observations are stored flat, cluster by cluster, in input order. The flat
//! index of observation `i` of cluster `g` is `offsets[g] + i`, so ordering by
//! flat index is the same as ordering by `(cluster, within-cluster index)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteredSample {
    ids: Vec<String>,
    offsets: Vec<usize>,
    cluster_of: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
    cutoff: f64,
}

/// Groups raw `(cluster_id, x, y)` rows into a [`ClusteredSample`].
///
/// Clusters are numbered by first appearance and rows keep their input order
/// within a cluster. `x` is stored relative to `cutoff`.
pub fn validate_sample<S: AsRef<str>>(raw: &[(S, f64, f64)], cutoff: f64) -> Result<ClusteredSample> {
    if raw.is_empty() {
        return Err(RdError::EmptyInput);
    }
    if !cutoff.is_finite() {
        return Err(RdError::NonFiniteCutoff);
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut ids = Vec::new();
    for (row, (id, x, y)) in raw.iter().enumerate() {
        if !x.is_finite() || !y.is_finite() {
            return Err(RdError::NonFiniteValue { row });
        }
        let id = id.as_ref();
        let g = *index.entry(id).or_insert_with(|| {
            ids.push(id.to_string());
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(row);
    }

    let n = raw.len();
    let mut offsets = Vec::with_capacity(groups.len() + 1);
    let mut cluster_of = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    offsets.push(0);
    for (g, rows) in groups.iter().enumerate() {
        for &r in rows {
            cluster_of.push(g);
            xs.push(raw[r].1 - cutoff);
            ys.push(raw[r].2);
        }
        offsets.push(xs.len());
    }
    Ok(ClusteredSample { ids, offsets, cluster_of, x: xs, y: ys, cutoff })
}

impl ClusteredSample {
    /// Builds a sample from per-cluster sizes and flat, already-normalized
    /// columns. Cluster ids are the decimal cluster indices.
    pub fn from_sizes(sizes: &[usize], x: Vec<f64>, y: Vec<f64>) -> Result<ClusteredSample> {
        let n: usize = sizes.iter().sum();
        if n == 0 {
            return Err(RdError::EmptyInput);
        }
        if sizes.contains(&0) {
            return Err(RdError::InvalidInput("clusters must be nonempty".into()));
        }
        if x.len() != n {
            return Err(RdError::ShapeMismatch { expected: n, found: x.len() });
        }
        if y.len() != n {
            return Err(RdError::ShapeMismatch { expected: n, found: y.len() });
        }
        if let Some(row) = x.iter().zip(&y).position(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(RdError::NonFiniteValue { row });
        }
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        let mut cluster_of = Vec::with_capacity(n);
        offsets.push(0);
        for (g, &s) in sizes.iter().enumerate() {
            cluster_of.extend(std::iter::repeat_n(g, s));
            offsets.push(cluster_of.len());
        }
        let ids = (0..sizes.len()).map(|g| g.to_string()).collect();
        Ok(ClusteredSample { ids, offsets, cluster_of, x, y, cutoff: 0.0 })
    }

    /// Same design, new outcomes.
    pub fn with_outcomes(&self, y: Vec<f64>) -> Result<ClusteredSample> {
        if y.len() != self.n() {
            return Err(RdError::ShapeMismatch { expected: self.n(), found: y.len() });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(RdError::NonFiniteValue { row });
        }
        Ok(ClusteredSample { y, ..self.clone() })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn num_clusters(&self) -> usize {
        self.ids.len()
    }

    #[inline]
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    #[inline]
    pub fn cluster_of(&self, obs: usize) -> usize {
        self.cluster_of[obs]
    }

    /// Flat index range of cluster `g`.
    #[inline]
    pub fn cluster_range(&self, g: usize) -> std::ops::Range<usize> {
        self.offsets[g]..self.offsets[g + 1]
    }

    pub fn cluster_id(&self, g: usize) -> &str {
        &self.ids[g]
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `(cluster, within-cluster index)` of a flat index.
    pub fn locate(&self, obs: usize) -> (usize, usize) {
        let g = self.cluster_of[obs];
        (g, obs - self.offsets[g])
    }

    /// Rows as `(cluster_id, normalized x, y)`.
    pub fn rows(&self) -> Vec<(String, f64, f64)> {
        (0..self.n())
            .map(|i| (self.ids[self.cluster_of[i]].clone(), self.x[i], self.y[i]))
            .collect()
    }

    /// Sample standard deviation of the running variable.
    pub fn sd_x(&self) -> f64 {
        let n = self.n() as f64;
        if self.n() < 2 {
            return 0.0;
        }
        let mean = self.x.iter().sum::<f64>() / n;
        let ss: f64 = self.x.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    }
}

/// Bandwidth and minimum per-side support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub h: f64,
    pub min_per_side: usize,
}

impl WindowConfig {
    pub const DEFAULT_MIN_PER_SIDE: usize = 3;

    pub fn new(h: f64) -> Result<WindowConfig> {
        if !(h.is_finite() && h > 0.0) {
            return Err(RdError::InvalidBandwidth(h));
        }
        Ok(WindowConfig { h, min_per_side: Self::DEFAULT_MIN_PER_SIDE })
    }

    pub fn with_min_per_side(mut self, min_per_side: usize) -> WindowConfig {
        self.min_per_side = min_per_side;
        self
    }
}
