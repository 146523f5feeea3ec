//! Synthetic clustered RD designs with known covariance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{RdError, Result};
use crate::sample::ClusteredSample;
use crate::variance::SigmaOracle;

/// Running-variable support is the standard normal truncated to this range.
pub const X_BOUND: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Framework {
    I,
    II,
    III,
    IV,
    #[serde(rename = "example2")]
    Example2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XMode {
    IidContinuous,
    WithinClusterCorrelated,
    ClusterConstant,
}

impl XMode {
    pub fn is_continuous(self) -> bool {
        !matches!(self, XMode::ClusterConstant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ClusterSizes {
    /// `n / size` clusters of `size` units.
    Equal { size: usize },
    /// `count` clusters with sizes in `[min, max]` summing to `n`.
    Range { count: usize, min: usize, max: usize },
    /// `n - ⌊n^a⌋` singletons plus `⌊n^b⌋` clusters of `⌊n^(a-b)⌋` units.
    Example2 { a: f64, b: f64 },
}

/// `μ(x) = τ 1{x ≥ 0} + slope·x + (curvature/2) x² sign(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuSpec {
    pub tau: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub curvature: f64,
}

impl MuSpec {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let step = if x >= 0.0 { self.tau } else { 0.0 };
        let sign = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        step + self.slope * x + 0.5 * self.curvature * x * x * sign
    }
}

/// Random-effects errors `σ (√ρ α_g + √(1-ρ) u_gi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub rho: f64,
    pub sigma: f64,
}

fn default_copula() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub framework: Framework,
    pub n: usize,
    pub clusters: ClusterSizes,
    pub x_mode: XMode,
    /// Gaussian-copula correlation of `x` within a cluster in
    /// `within_cluster_correlated` mode.
    #[serde(default = "default_copula")]
    pub copula_correlation: f64,
    pub mu: MuSpec,
    pub errors: ErrorSpec,
    #[serde(default)]
    pub seed: u64,
}

impl DgpConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RdError::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        match (self.framework, self.x_mode.is_continuous()) {
            (Framework::I | Framework::III, false) => {
                return bad("frameworks I and III need a continuous running variable".into())
            }
            (Framework::II | Framework::IV, true) => {
                return bad("frameworks II and IV use cluster-constant running variables".into())
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.errors.rho) {
            return bad(format!("rho must lie in [0, 1), got {}", self.errors.rho));
        }
        if !(self.errors.sigma > 0.0 && self.errors.sigma.is_finite()) {
            return bad(format!("sigma must be positive, got {}", self.errors.sigma));
        }
        if !(0.0..1.0).contains(&self.copula_correlation) {
            return bad(format!("copula correlation must lie in [0, 1), got {}", self.copula_correlation));
        }
        if ![self.mu.tau, self.mu.slope, self.mu.curvature].iter().all(|v| v.is_finite()) {
            return bad("regression function parameters must be finite".into());
        }
        match self.clusters {
            ClusterSizes::Equal { size } => {
                if size == 0 || !self.n.is_multiple_of(size) {
                    return bad(format!("n = {} is not a multiple of cluster size {size}", self.n));
                }
            }
            ClusterSizes::Range { count, min, max } => {
                if count == 0 || min == 0 || min > max || count * min > self.n || count * max < self.n {
                    return bad(format!("cannot split n = {} into {count} clusters of size {min}..={max}", self.n));
                }
            }
            ClusterSizes::Example2 { a, b } => {
                if !(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0 && a >= b) {
                    return bad(format!("example2 needs 0 < b <= a < 1, got a = {a}, b = {b}"));
                }
            }
        }
        if self.framework == Framework::Example2 && !matches!(self.clusters, ClusterSizes::Example2 { .. }) {
            return bad("framework example2 needs the example2 size rule".into());
        }
        Ok(())
    }
}

/// Deterministic stream for `(seed, replication, purpose)`.
fn rng_for(seed: u64, replication: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication.wrapping_mul(4).wrapping_add(purpose));
    rng
}

const STREAM_X: u64 = 0;
const STREAM_ERRORS: u64 = 1;
const STREAM_SIZES: u64 = 3;

/// A validated configuration with its (replication-invariant) cluster sizes.
#[derive(Debug, Clone)]
pub struct Dgp {
    cfg: DgpConfig,
    sizes: Vec<usize>,
    normal: Normal,
    lower: f64,
    upper: f64,
}

/// One generated data set.
#[derive(Debug, Clone)]
pub struct Draw {
    pub sample: ClusteredSample,
    pub sigma: SigmaOracle,
    pub tau: f64,
}

pub fn dgp_generate(cfg: &DgpConfig, replication: u64) -> Result<Draw> {
    Dgp::new(cfg.clone())?.draw(replication)
}

impl Dgp {
    pub fn new(cfg: DgpConfig) -> Result<Dgp> {
        cfg.validate()?;
        let sizes = cluster_sizes(&cfg);
        let normal = Normal::standard();
        let lower = normal.cdf(-X_BOUND);
        let upper = normal.cdf(X_BOUND);
        Ok(Dgp { cfg, sizes, normal, lower, upper })
    }

    pub fn config(&self) -> &DgpConfig {
        &self.cfg
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Marginal density of the running variable at the cutoff.
    pub fn density_at_cutoff(&self) -> f64 {
        self.normal.pdf(0.0) / (self.upper - self.lower)
    }

    /// Joint density of two distinct units of one cluster at `(0, 0)` under
    /// a continuous mode.
    pub fn pair_density_at_cutoff(&self) -> f64 {
        let f = self.density_at_cutoff();
        match self.cfg.x_mode {
            XMode::IidContinuous => f * f,
            XMode::WithinClusterCorrelated => {
                let c = self.cfg.copula_correlation;
                f * f / (1.0 - c * c).sqrt()
            }
            XMode::ClusterConstant => f64::INFINITY,
        }
    }

    fn to_truncated(&self, z: f64) -> f64 {
        let u = self.lower + self.normal.cdf(z) * (self.upper - self.lower);
        self.normal.inverse_cdf(u).clamp(-X_BOUND, X_BOUND)
    }

    /// Running-variable draws for a replication, flat in cluster order.
    pub fn design(&self, replication: u64) -> Vec<f64> {
        let mut rng = rng_for(self.cfg.seed, replication, STREAM_X);
        let mut x = Vec::with_capacity(self.n());
        let c = self.cfg.copula_correlation;
        for &m in &self.sizes {
            match self.cfg.x_mode {
                XMode::IidContinuous => {
                    for _ in 0..m {
                        let z: f64 = rng.sample(StandardNormal);
                        x.push(self.to_truncated(z));
                    }
                }
                XMode::WithinClusterCorrelated => {
                    let common: f64 = rng.sample(StandardNormal);
                    for _ in 0..m {
                        let z: f64 = rng.sample(StandardNormal);
                        x.push(self.to_truncated(c.sqrt() * common + (1.0 - c).sqrt() * z));
                    }
                }
                XMode::ClusterConstant => {
                    let z: f64 = rng.sample(StandardNormal);
                    let v = self.to_truncated(z);
                    x.extend(std::iter::repeat_n(v, m));
                }
            }
        }
        x
    }

    /// Outcomes `μ(x) + ε` for a given design.
    pub fn outcomes(&self, x: &[f64], replication: u64) -> Vec<f64> {
        let mut rng = rng_for(self.cfg.seed, replication, STREAM_ERRORS);
        let ErrorSpec { rho, sigma } = self.cfg.errors;
        let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
        let mut y = Vec::with_capacity(x.len());
        let mut k = 0;
        for &m in &self.sizes {
            let alpha: f64 = rng.sample(StandardNormal);
            for _ in 0..m {
                let u: f64 = rng.sample(StandardNormal);
                y.push(self.cfg.mu.eval(x[k]) + sigma * (a * alpha + b * u));
                k += 1;
            }
        }
        y
    }

    pub fn sigma(&self) -> SigmaOracle {
        let ErrorSpec { rho, sigma } = self.cfg.errors;
        SigmaOracle::exchangeable(&self.sizes, sigma * sigma, rho).expect("validated error spec")
    }

    pub fn draw(&self, replication: u64) -> Result<Draw> {
        let x = self.design(replication);
        let y = self.outcomes(&x, replication);
        Ok(Draw { sample: ClusteredSample::from_sizes(&self.sizes, x, y)?, sigma: self.sigma(), tau: self.cfg.mu.tau })
    }

    /// New outcomes on an existing design (fixed-design studies).
    pub fn redraw_outcomes(&self, sample: &ClusteredSample, replication: u64) -> Result<ClusteredSample> {
        sample.with_outcomes(self.outcomes(sample.x(), replication))
    }
}

fn cluster_sizes(cfg: &DgpConfig) -> Vec<usize> {
    match cfg.clusters {
        ClusterSizes::Equal { size } => vec![size; cfg.n / size],
        ClusterSizes::Range { count, min, max } => {
            let mut rng = rng_for(cfg.seed, 0, STREAM_SIZES);
            let mut sizes: Vec<usize> = (0..count).map(|_| rng.random_range(min..=max)).collect();
            let mut total: usize = sizes.iter().sum();
            while total != cfg.n {
                let g = rng.random_range(0..count);
                if total > cfg.n && sizes[g] > min {
                    sizes[g] -= 1;
                    total -= 1;
                } else if total < cfg.n && sizes[g] < max {
                    sizes[g] += 1;
                    total += 1;
                }
            }
            sizes
        }
        ClusterSizes::Example2 { a, b } => {
            let n = cfg.n as f64;
            let singles = cfg.n - n.powf(a).floor() as usize;
            let large = n.powf(b).floor() as usize;
            let large_size = n.powf(a - b).floor() as usize;
            let mut sizes = vec![1; singles];
            sizes.extend(std::iter::repeat_n(large_size.max(1), large));
            sizes
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn framework_one(n: usize) -> DgpConfig {
        DgpConfig {
            framework: Framework::I,
            n,
            clusters: ClusterSizes::Equal { size: 2 },
            x_mode: XMode::IidContinuous,
            copula_correlation: 0.5,
            mu: MuSpec { tau: 0.5, slope: 1.0, curvature: 0.0 },
            errors: ErrorSpec { rho: 0.5, sigma: 1.0 },
            seed: 11,
        }
    }

    #[test]
    fn equal_clusters_and_sigma_blocks() {
        let d = dgp_generate(&framework_one(1000), 0).unwrap();
        assert_eq!(d.sample.n(), 1000);
        assert_eq!(d.sample.num_clusters(), 500);
        let b = &d.sigma.blocks()[0];
        assert_eq!((b.nrows(), b.ncols()), (2, 2));
        assert_eq!(b[(0, 1)], 0.5);
        assert_eq!(b[(0, 0)], 1.0);
        assert!(d.sample.x().iter().all(|x| x.abs() <= X_BOUND));
    }

    #[test]
    fn cluster_constant_design() {
        let cfg = DgpConfig {
            framework: Framework::IV,
            clusters: ClusterSizes::Equal { size: 10 },
            x_mode: XMode::ClusterConstant,
            ..framework_one(500)
        };
        let d = dgp_generate(&cfg, 3).unwrap();
        for g in 0..d.sample.num_clusters() {
            let xs: Vec<f64> = d.sample.cluster_range(g).map(|i| d.sample.x()[i]).collect();
            assert!(xs.iter().all(|&v| v == xs[0]));
        }
    }

    #[test]
    fn determinism_and_replication_streams() {
        let cfg = framework_one(400);
        let a = dgp_generate(&cfg, 5).unwrap();
        let b = dgp_generate(&cfg, 5).unwrap();
        assert_eq!(a.sample, b.sample);
        let c = dgp_generate(&cfg, 6).unwrap();
        assert_ne!(a.sample.x(), c.sample.x());
    }

    #[test]
    fn range_sizes_sum_to_n() {
        let cfg = DgpConfig { clusters: ClusterSizes::Range { count: 2000, min: 1, max: 5 }, ..framework_one(5000) };
        let dgp = Dgp::new(cfg).unwrap();
        assert_eq!(dgp.n(), 5000);
        assert_eq!(dgp.sizes().len(), 2000);
        assert!(dgp.sizes().iter().all(|&s| (1..=5).contains(&s)));
        assert!(dgp.sizes().contains(&1) && dgp.sizes().contains(&5));
    }

    #[test]
    fn example2_sizes() {
        let cfg = DgpConfig {
            framework: Framework::Example2,
            clusters: ClusterSizes::Example2 { a: 0.8, b: 0.4 },
            ..framework_one(10_000)
        };
        let dgp = Dgp::new(cfg).unwrap();
        let singles = dgp.sizes().iter().filter(|&&s| s == 1).count();
        assert_eq!(singles, 10_000 - 1584);
        assert_eq!(dgp.sizes().len() - singles, 39);
        assert!(dgp.sizes().iter().filter(|&&s| s > 1).all(|&s| s == 39));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = framework_one(1001);
        assert!(Dgp::new(cfg.clone()).is_err());
        cfg.n = 1000;
        cfg.x_mode = XMode::ClusterConstant;
        assert!(Dgp::new(cfg.clone()).is_err());
        cfg.x_mode = XMode::IidContinuous;
        cfg.errors.rho = 1.0;
        assert!(Dgp::new(cfg).is_err());
    }

    #[test]
    fn regression_function() {
        let mu = MuSpec { tau: 0.7, slope: 2.0, curvature: -3.0 };
        assert_eq!(mu.eval(0.0), 0.7);
        assert!((mu.eval(0.5) - (0.7 + 1.0 - 0.375)).abs() < 1e-15);
        assert!((mu.eval(-0.5) - (-1.0 + 0.375)).abs() < 1e-15);
    }
}
