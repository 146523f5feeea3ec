//! One-dimensional nearest-neighbor search with deterministic tie-breaking.
//!
//! Points carry a `tag`; among equidistant candidates the smaller tag wins.
//! Tags are flat observation indices (or positions in a cluster-ordered
//! support list), so ties resolve by cluster, then within-cluster index.

use std::cmp::Ordering;

#[derive(Debug, Clone, Default)]
pub(crate) struct SortedPoints {
    xs: Vec<f64>,
    tags: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Hit {
    pub dist: f64,
    pub tag: usize,
}

impl SortedPoints {
    pub fn new(mut points: Vec<(f64, usize)>) -> SortedPoints {
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (xs, tags) = points.into_iter().unzip();
        SortedPoints { xs, tags }
    }

    /// The `k` eligible points closest to `target`, sorted by `(distance, tag)`.
    ///
    /// With `keep_ties`, every eligible point tied with the `k`-th distance is
    /// also returned. Fewer than `k` hits means the eligible set was exhausted.
    pub fn nearest<F>(&self, target: f64, k: usize, keep_ties: bool, mut eligible: F) -> Vec<Hit>
    where
        F: FnMut(usize) -> bool,
    {
        let mut hits = Vec::with_capacity(k + 2);
        if k == 0 || self.xs.is_empty() {
            return hits;
        }
        let start = self.xs.partition_point(|&x| x < target);
        let mut left = start; // next candidate on the left is left - 1
        let mut right = start;
        let mut kth: Option<f64> = None;
        loop {
            let dl = if left > 0 { Some(target - self.xs[left - 1]) } else { None };
            let dr = if right < self.xs.len() { Some(self.xs[right] - target) } else { None };
            let (pos, dist) = match (dl, dr) {
                (None, None) => break,
                (Some(d), None) => {
                    left -= 1;
                    (left, d)
                }
                (None, Some(d)) => {
                    right += 1;
                    (right - 1, d)
                }
                (Some(a), Some(b)) => {
                    if a <= b {
                        left -= 1;
                        (left, a)
                    } else {
                        right += 1;
                        (right - 1, b)
                    }
                }
            };
            if let Some(limit) = kth {
                if dist > limit {
                    break;
                }
            }
            let tag = self.tags[pos];
            if eligible(tag) {
                hits.push(Hit { dist, tag });
                if kth.is_none() && hits.len() == k {
                    kth = Some(dist);
                }
            }
        }
        hits.sort_by(|a, b| a.dist.partial_cmp(&b.dist).unwrap_or(Ordering::Equal).then(a.tag.cmp(&b.tag)));
        if !keep_ties {
            hits.truncate(k);
        }
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(points: &[(f64, usize)], target: f64, k: usize, keep_ties: bool, skip: &[usize]) -> Vec<usize> {
        let mut c: Vec<(f64, usize)> = points
            .iter()
            .filter(|p| !skip.contains(&p.1))
            .map(|&(x, t)| ((x - target).abs(), t))
            .collect();
        c.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        if c.len() <= k {
            return c.into_iter().map(|p| p.1).collect();
        }
        let limit = c[k - 1].0;
        c.into_iter()
            .enumerate()
            .take_while(|(i, p)| *i < k || (keep_ties && p.0 <= limit))
            .map(|(_, p)| p.1)
            .collect()
    }

    #[test]
    fn matches_brute_force_with_ties() {
        let points: Vec<(f64, usize)> = [0.5, 0.1, 0.3, 0.3, 0.7, 0.9, 0.3, 0.5, 0.0]
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, i))
            .collect();
        let sp = SortedPoints::new(points.clone());
        for &target in &[0.3, 0.4, 0.0, 1.0, -1.0, 0.45] {
            for k in 1..6 {
                for keep_ties in [false, true] {
                    for skip in [vec![], vec![2, 3], vec![0, 7, 6]] {
                        let got: Vec<usize> = sp
                            .nearest(target, k, keep_ties, |t| !skip.contains(&t))
                            .iter()
                            .map(|h| h.tag)
                            .collect();
                        assert_eq!(got, brute(&points, target, k, keep_ties, &skip), "t={target} k={k} ties={keep_ties}");
                    }
                }
            }
        }
    }

    #[test]
    fn exhausted_pool_returns_fewer() {
        let sp = SortedPoints::new(vec![(0.1, 0), (0.2, 1)]);
        assert_eq!(sp.nearest(0.0, 5, false, |_| true).len(), 2);
        assert!(sp.nearest(0.0, 1, false, |_| false).is_empty());
    }
}
