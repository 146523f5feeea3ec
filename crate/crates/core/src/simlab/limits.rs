//! Closed-form large-sample limits of the conditional variance.

use serde::{Deserialize, Serialize};

use super::dgp::{Dgp, DgpConfig};
use super::stats::CompensatedSum;
use crate::error::{RdError, Result};
use crate::estimator::{lambda_n, local_linear_weights};
use crate::kernel::Kernel;
use crate::sample::{ClusteredSample, WindowConfig};
use crate::variance::oracle_conditional_se2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitForm {
    /// Continuous joint density of the running variable within clusters.
    ContinuousDesign,
    /// Running variable constant within clusters.
    ClusterConstant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    pub form: LimitForm,
    pub h: f64,
    pub n: usize,
    pub lambda_n: f64,
    pub replications: usize,
    pub failures: usize,
    pub mean_oracle_se2: f64,
    pub limit_se2: f64,
    /// `mean_oracle_se2 / limit_se2`.
    pub ratio: f64,
}

/// Compares the average oracle conditional variance over `reps` designs with
/// its closed-form limit, using the DGP's known density and covariances.
pub fn variance_limit_check(cfg: &DgpConfig, h: f64, reps: usize, kernel: &Kernel) -> Result<LimitReport> {
    if reps == 0 {
        return Err(RdError::InvalidConfig("reps must be at least 1".into()));
    }
    let dgp = Dgp::new(cfg.clone())?;
    let form = if cfg.x_mode.is_continuous() { LimitForm::ContinuousDesign } else { LimitForm::ClusterConstant };
    let n = dgp.n();
    let window = WindowConfig::new(h)?;
    let sigma = dgp.sigma();
    let dummy_y = vec![0.0; n];

    let values: Vec<Option<f64>> = (0..reps as u64)
        .map(|rep| {
            let sample = ClusteredSample::from_sizes(dgp.sizes(), dgp.design(rep), dummy_y.clone()).ok()?;
            let weights = local_linear_weights(&sample, kernel, &window).ok()?;
            oracle_conditional_se2(&weights, &sigma).ok()
        })
        .collect();
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    if ok.is_empty() {
        return Err(RdError::AllReplicationsFailed(reps));
    }
    let mean_oracle_se2 = ok.iter().copied().collect::<CompensatedSum>().value() / ok.len() as f64;

    let sizes_sample = ClusteredSample::from_sizes(dgp.sizes(), vec![0.0; n], dummy_y)?;
    let lam = lambda_n(&sizes_sample, h);
    let kappa = kernel.constants()?.kappa;
    let f = dgp.density_at_cutoff();
    let s2 = cfg.errors.sigma * cfg.errors.sigma;
    let cov = s2 * cfg.errors.rho;
    let nh = n as f64 * h;
    let limit_se2 = match form {
        LimitForm::ContinuousDesign => {
            // Σ_{★,⋄} ±σ(0★,0⋄) with a common covariance on both sides.
            let signed_cov = cov + cov - 2.0 * cov;
            (kappa * 2.0 * s2 / f + lam * signed_cov * dgp.pair_density_at_cutoff() / (f * f)) / nh
        }
        LimitForm::ClusterConstant => kappa / f * 2.0 * (s2 + lam / h * cov) / nh,
    };
    Ok(LimitReport {
        form,
        h,
        n,
        lambda_n: lam,
        replications: reps,
        failures: reps - ok.len(),
        mean_oracle_se2,
        limit_se2,
        ratio: mean_oracle_se2 / limit_se2,
    })
}
