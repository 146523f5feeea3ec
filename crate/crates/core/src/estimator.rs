//! Local linear RD weights, point estimate, worst-case bias and `λ_n`.
//!
//! Each side of the cutoff gets its own kernel-weighted linear fit. With the
//! normalized one-sided moments
//!
//! ```text
//! S★_l = (1/n) Σ k★_h(X) (X/h)^l,   l = 0..3
//! ```
//!
//! the intercept of the side-★ fit is `Σ w★_i Y_i` with
//!
//! ```text
//! w★_i = (1/n) k★_h(X_i) (S★_2 - S★_1 X_i/h) / (S★_2 S★_0 - (S★_1)^2)
//! ```
//!
//! and the RD estimate is `Σ (w⁺_i - w⁻_i) Y_i`.

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result, Side};
use crate::kernel::Kernel;
use crate::sample::{ClusteredSample, WindowConfig};

/// Relative guard on `S_2 S_0 - S_1^2` against `S_2 S_0`.
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideMoments {
    pub plus: [f64; 4],
    pub minus: [f64; 4],
}

impl SideMoments {
    pub fn side(&self, side: Side) -> &[f64; 4] {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    fn determinant(&self, side: Side) -> f64 {
        let s = self.side(side);
        s[2] * s[0] - s[1] * s[1]
    }
}

pub fn side_moments(sample: &ClusteredSample, kernel: &Kernel, h: f64) -> SideMoments {
    let n = sample.n() as f64;
    let mut m = SideMoments { plus: [0.0; 4], minus: [0.0; 4] };
    for &x in sample.x() {
        let k = kernel.eval_scaled(x, h);
        if k == 0.0 {
            continue;
        }
        let acc = match Side::of(x) {
            Side::Plus => &mut m.plus,
            Side::Minus => &mut m.minus,
        };
        let u = x / h;
        let mut p = k / n;
        for slot in acc.iter_mut() {
            *slot += p;
            p *= u;
        }
    }
    m
}

/// Per-observation local linear RD weights, indexed by flat observation index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub w: Vec<f64>,
    pub w_plus: Vec<f64>,
    pub w_minus: Vec<f64>,
    /// `k_h(X_i)`; nonzero exactly on the estimation window.
    pub kernel_weight: Vec<f64>,
    pub moments: SideMoments,
    pub h: f64,
}

impl WeightSet {
    pub fn n(&self) -> usize {
        self.w.len()
    }

    #[inline]
    pub fn in_window(&self, obs: usize) -> bool {
        self.kernel_weight[obs] > 0.0
    }

    pub fn n_in_window(&self) -> usize {
        self.kernel_weight.iter().filter(|&&k| k > 0.0).count()
    }

    /// Number of clusters with at least one in-window observation.
    pub fn clusters_in_window(&self, sample: &ClusteredSample) -> usize {
        (0..sample.num_clusters())
            .filter(|&g| sample.cluster_range(g).any(|i| self.in_window(i)))
            .count()
    }

    pub fn side_weights(&self, side: Side) -> &[f64] {
        match side {
            Side::Plus => &self.w_plus,
            Side::Minus => &self.w_minus,
        }
    }

    pub(crate) fn check_shape(&self, n: usize) -> Result<()> {
        if self.n() != n {
            return Err(RdError::ShapeMismatch { expected: n, found: self.n() });
        }
        Ok(())
    }
}

pub fn local_linear_weights(sample: &ClusteredSample, kernel: &Kernel, cfg: &WindowConfig) -> Result<WeightSet> {
    let h = cfg.h;
    if !(h.is_finite() && h > 0.0) {
        return Err(RdError::InvalidBandwidth(h));
    }
    let n = sample.n();
    let kernel_weight: Vec<f64> = sample.x().iter().map(|&x| kernel.eval_scaled(x, h)).collect();

    for side in Side::BOTH {
        let mut xs: Vec<f64> = sample
            .x()
            .iter()
            .zip(&kernel_weight)
            .filter(|&(&x, &k)| k > 0.0 && Side::of(x) == side)
            .map(|(&x, _)| x)
            .collect();
        if xs.len() < cfg.min_per_side {
            return Err(RdError::InsufficientSupport { side, found: xs.len(), required: cfg.min_per_side });
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        if xs.len() < 2 {
            return Err(RdError::InsufficientSupport { side, found: xs.len(), required: 2 });
        }
    }

    let moments = side_moments(sample, kernel, h);
    for side in Side::BOTH {
        let s = moments.side(side);
        if moments.determinant(side) <= DEGENERACY_TOL * s[2] * s[0] {
            return Err(RdError::DegenerateDesign { side });
        }
    }

    let nf = n as f64;
    let mut w = vec![0.0; n];
    let mut w_plus = vec![0.0; n];
    let mut w_minus = vec![0.0; n];
    for (i, &x) in sample.x().iter().enumerate() {
        let k = kernel_weight[i];
        if k == 0.0 {
            continue;
        }
        let side = Side::of(x);
        let s = moments.side(side);
        let wi = k * (s[2] - s[1] * x / h) / (moments.determinant(side) * nf);
        match side {
            Side::Plus => {
                w_plus[i] = wi;
                w[i] = wi;
            }
            Side::Minus => {
                w_minus[i] = wi;
                w[i] = -wi;
            }
        }
    }
    Ok(WeightSet { w, w_plus, w_minus, kernel_weight, moments, h })
}

/// Intercepts and slopes of the two one-sided weighted linear fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFit {
    pub b0_plus: f64,
    pub b1_plus: f64,
    pub b0_minus: f64,
    pub b1_minus: f64,
}

impl LocalFit {
    #[inline]
    pub fn predict(&self, x: f64) -> f64 {
        match Side::of(x) {
            Side::Plus => self.b0_plus + self.b1_plus * x,
            Side::Minus => self.b0_minus + self.b1_minus * x,
        }
    }

    pub fn tau(&self) -> f64 {
        self.b0_plus - self.b0_minus
    }

    /// `Y - μ̂(X)` for every observation, in or out of the window.
    pub fn residuals(&self, sample: &ClusteredSample) -> Vec<f64> {
        sample.x().iter().zip(sample.y()).map(|(&x, &y)| y - self.predict(x)).collect()
    }
}

/// `τ̂ = Σ w_i Y_i` together with the one-sided fits behind it.
pub fn rd_estimate(sample: &ClusteredSample, weights: &WeightSet) -> Result<(f64, LocalFit)> {
    weights.check_shape(sample.n())?;
    let h = weights.h;
    let nf = sample.n() as f64;
    let mut b0 = [0.0; 2];
    // (1/n) Σ k★_h(X) (X/h)^l Y for l = 0, 1
    let mut t = [[0.0; 2]; 2];
    let mut tau = 0.0;
    for (i, (&x, &y)) in sample.x().iter().zip(sample.y()).enumerate() {
        let k = weights.kernel_weight[i];
        if k == 0.0 {
            continue;
        }
        let s = Side::of(x).index();
        tau += weights.w[i] * y;
        b0[s] += weights.side_weights(Side::of(x))[i] * y;
        t[s][0] += k * y / nf;
        t[s][1] += k * (x / h) * y / nf;
    }
    let slope = |side: Side| {
        let m = weights.moments.side(side);
        let tt = t[side.index()];
        (m[0] * tt[1] - m[1] * tt[0]) / (m[2] * m[0] - m[1] * m[1]) / h
    };
    let fit = LocalFit {
        b0_plus: b0[0],
        b1_plus: slope(Side::Plus),
        b0_minus: b0[1],
        b1_minus: slope(Side::Minus),
    };
    Ok((tau, fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBound {
    pub m: f64,
    pub b_bar: f64,
}

/// `b̄(h) = -(M/2) Σ w_i X_i^2 sign(X_i)`, with `sign(0) = 0`.
pub fn worst_case_bias(sample: &ClusteredSample, weights: &WeightSet, m: f64) -> Result<BiasBound> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(RdError::NegativeM(m));
    }
    weights.check_shape(sample.n())?;
    let s: f64 = sample
        .x()
        .iter()
        .zip(&weights.w)
        .map(|(&x, &w)| {
            let sign = if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            };
            w * x * x * sign
        })
        .sum();
    Ok(BiasBound { m, b_bar: -0.5 * m * s })
}

/// `λ_n = (h/n) Σ_g n_g (n_g - 1)` over full cluster sizes.
pub fn lambda_n(sample: &ClusteredSample, h: f64) -> f64 {
    let pairs: f64 = sample.cluster_sizes().iter().map(|&s| (s * s.saturating_sub(1)) as f64).sum();
    h * pairs / sample.n() as f64
}
