//! Kernels on `[-1, 1]` and their one-sided boundary constants.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Uniform,
    Triangular,
    Epanechnikov,
    Custom,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::Uniform => "uniform",
            KernelKind::Triangular => "triangular",
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for KernelKind {
    type Err = RdError;

    fn from_str(s: &str) -> Result<KernelKind> {
        match s {
            "uniform" => Ok(KernelKind::Uniform),
            "triangular" => Ok(KernelKind::Triangular),
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            other => Err(RdError::InvalidKernel(format!("unknown kernel `{other}`"))),
        }
    }
}

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A symmetric kernel density supported on `[-1, 1]`.
///
/// Custom kernels are given by their profile on `[0, 1]`; evaluation at `v`
/// uses `|v|` so symmetry holds by construction.
#[derive(Clone)]
pub enum Kernel {
    Uniform,
    Triangular,
    Epanechnikov,
    Custom { name: String, profile: Profile },
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Custom { name, .. } => write!(f, "Kernel::Custom({name})"),
            other => write!(f, "Kernel::{}", other.kind()),
        }
    }
}

impl Kernel {
    pub fn from_kind(kind: KernelKind) -> Result<Kernel> {
        match kind {
            KernelKind::Uniform => Ok(Kernel::Uniform),
            KernelKind::Triangular => Ok(Kernel::Triangular),
            KernelKind::Epanechnikov => Ok(Kernel::Epanechnikov),
            KernelKind::Custom => Err(RdError::InvalidKernel(
                "custom kernels need a profile; use Kernel::custom".into(),
            )),
        }
    }

    /// Wraps a user profile. The profile must be nonnegative on `[0, 1]` and
    /// the resulting symmetric kernel must integrate to one.
    pub fn custom<F>(name: impl Into<String>, profile: F) -> Result<Kernel>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let kernel = Kernel::Custom { name: name.into(), profile: Arc::new(profile) };
        for i in 0..=200 {
            let v = i as f64 / 200.0;
            let k = kernel.eval(v);
            if !(k.is_finite() && k >= 0.0) {
                return Err(RdError::InvalidKernel(format!("profile is {k} at v = {v}")));
            }
        }
        let mass = 2.0 * integrate(|v| kernel.eval(v), 0.0, 1.0, 1e-12);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(RdError::InvalidKernel(format!("kernel integrates to {mass}, not 1")));
        }
        Ok(kernel)
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::Uniform => KernelKind::Uniform,
            Kernel::Triangular => KernelKind::Triangular,
            Kernel::Epanechnikov => KernelKind::Epanechnikov,
            Kernel::Custom { .. } => KernelKind::Custom,
        }
    }

    /// `k(v)`; exactly zero outside `[-1, 1]`.
    #[inline]
    pub fn eval(&self, v: f64) -> f64 {
        let a = v.abs();
        if !(a <= 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Epanechnikov => 0.75 * (1.0 - a * a),
            Kernel::Custom { profile, .. } => profile(a),
        }
    }

    /// Scaled kernel `k(x / h) / h`.
    #[inline]
    pub fn eval_scaled(&self, x: f64, h: f64) -> f64 {
        self.eval(x / h) / h
    }

    pub fn constants(&self) -> Result<KernelConstants> {
        kernel_constants(self)
    }
}

/// One-sided moments `mu_bar[j] = ∫_0^1 k(v) v^j dv` and the derived bias and
/// variance constants of the local linear boundary estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConstants {
    pub mu_bar: [f64; 4],
    /// Leading bias constant.
    pub mu: f64,
    /// `∫_0^1 k̄(v)^2 dv` for the equivalent boundary kernel `k̄`.
    pub kappa: f64,
}

impl KernelConstants {
    #[inline]
    pub fn determinant(&self) -> f64 {
        self.mu_bar[2] * self.mu_bar[0] - self.mu_bar[1] * self.mu_bar[1]
    }
}

const QUAD_TOL: f64 = 1e-10;
const DEGENERATE_TOL: f64 = 1e-12;

pub fn kernel_constants(kernel: &Kernel) -> Result<KernelConstants> {
    let mut mu_bar = [0.0; 4];
    for (j, m) in mu_bar.iter_mut().enumerate() {
        *m = integrate(|v| kernel.eval(v) * v.powi(j as i32), 0.0, 1.0, QUAD_TOL);
    }
    let det = mu_bar[2] * mu_bar[0] - mu_bar[1] * mu_bar[1];
    if det <= DEGENERATE_TOL {
        return Err(RdError::DegenerateKernel(det));
    }
    let mu = (mu_bar[2] * mu_bar[2] - mu_bar[1] * mu_bar[3]) / det;
    let boundary = |v: f64| kernel.eval(v) * (mu_bar[2] - mu_bar[1] * v) / det;
    let kappa = integrate(|v| boundary(v).powi(2), 0.0, 1.0, QUAD_TOL);
    Ok(KernelConstants { mu_bar, mu, kappa })
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
