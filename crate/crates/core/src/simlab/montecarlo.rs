//! Monte Carlo runner.
//!
//! Replications are keyed by `(seed, replication)` and run in parallel; the
//! per-replication outcomes are collected in replication order and reduced
//! sequentially with compensated sums, so results do not depend on the
//! number of threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{Dgp, DgpConfig};
use super::stats::{mean, sd, CompensatedSum};
use crate::analysis::{SeMethod, VarianceConstant};
use crate::bandwidth::{default_pilot_bandwidth, optimal_bandwidth, plug_in_variance_constants};
use crate::error::{RdError, Result};
use crate::estimator::{local_linear_weights, rd_estimate, worst_case_bias, WeightSet};
use crate::kernel::{Kernel, KernelKind};
use crate::sample::{ClusteredSample, WindowConfig};
use crate::variance::{
    build_neighbor_sets, oracle_conditional_se2, se_cnn, se_crr, se_ehw, se_naive_cnn, se_nn_iid,
    select_companion_clusters, CompanionConfig, NeighborPlan, SeEstimate, SigmaOracle,
};
use crate::Z_95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum BandwidthRule {
    Fixed {
        h: f64,
    },
    /// Plug-in worst-case-MSE bandwidth re-estimated in every replication.
    PlugIn {
        m: f64,
        #[serde(default)]
        constant: VarianceConstant,
        #[serde(default)]
        pilot: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub kernel: KernelKind,
    pub j: usize,
    pub r: usize,
    /// Curvature bound for the reported bias bound; zero omits it.
    pub m: f64,
    /// Draw the running variable once (replication 0) and only redraw outcomes.
    pub fixed_design: bool,
    pub min_per_side: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            kernel: KernelKind::Triangular,
            j: 3,
            r: 36,
            m: 0.0,
            fixed_design: false,
            min_per_side: WindowConfig::DEFAULT_MIN_PER_SIDE,
        }
    }
}

/// Outcome of one replication. `error` is set for failed replications, in
/// which case the numeric fields are meaningless and excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepOutcome {
    pub rep: u64,
    pub h: f64,
    pub tau_hat: f64,
    pub oracle_se2: f64,
    pub bias_bound: Option<f64>,
    pub se: BTreeMap<SeMethod, SeEstimate>,
    pub error: Option<String>,
}

impl RepOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn oracle_se(&self) -> f64 {
        self.oracle_se2.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub coverage: f64,
    pub mean_se: f64,
    pub mean_se2: f64,
    /// `mean_se / mean_oracle_se - 1`.
    pub relative_se_bias: f64,
    /// `mean_se2 / mean_oracle_se2 - 1`.
    pub relative_se2_bias: f64,
    pub negative_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub replications: usize,
    pub successes: usize,
    pub failures: usize,
    pub tau: f64,
    pub mean_tau_hat: f64,
    pub sd_tau_hat: f64,
    /// `mean_tau_hat - tau`.
    pub mean_error: f64,
    /// Monte Carlo standard error of `mean_tau_hat`.
    pub mc_se: f64,
    pub mean_oracle_se: f64,
    pub mean_oracle_se2: f64,
    pub mean_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_bias_bound: Option<f64>,
    pub methods: BTreeMap<SeMethod, MethodSummary>,
    /// Failure counts by error code.
    pub failure_codes: BTreeMap<String, usize>,
}

/// A simulation study as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub dgp: DgpConfig,
    pub reps: usize,
    pub bandwidth: BandwidthRule,
    #[serde(default = "all_methods")]
    pub methods: Vec<SeMethod>,
    #[serde(default = "default_kernel")]
    pub kernel: KernelKind,
    #[serde(default = "default_j")]
    pub j: usize,
    #[serde(default = "default_r")]
    pub r: usize,
    #[serde(default)]
    pub m: f64,
    #[serde(default)]
    pub fixed_design: bool,
}

fn all_methods() -> Vec<SeMethod> {
    SeMethod::ALL.to_vec()
}
fn default_kernel() -> KernelKind {
    KernelKind::Triangular
}
fn default_j() -> usize {
    3
}
fn default_r() -> usize {
    36
}

impl SimulationConfig {
    pub fn options(&self) -> McOptions {
        McOptions {
            kernel: self.kernel,
            j: self.j,
            r: self.r,
            m: self.m,
            fixed_design: self.fixed_design,
            ..McOptions::default()
        }
    }
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<(McReport, Vec<RepOutcome>)> {
    monte_carlo_with(&cfg.dgp, &cfg.bandwidth, &cfg.methods, cfg.reps, &cfg.options())
}

pub fn monte_carlo(cfg: &DgpConfig, h_rule: &BandwidthRule, methods: &[SeMethod], reps: usize) -> Result<McReport> {
    Ok(monte_carlo_with(cfg, h_rule, methods, reps, &McOptions::default())?.0)
}

/// Precomputed pieces that depend only on the design, for fixed designs with
/// a fixed bandwidth.
struct FixedDesign {
    weights: WeightSet,
    plan: Option<NeighborPlan>,
    oracle_se2: f64,
}

struct Runner<'a> {
    dgp: Dgp,
    rule: &'a BandwidthRule,
    methods: Vec<SeMethod>,
    opts: &'a McOptions,
    kernel: Kernel,
    sigma: SigmaOracle,
    design: Option<ClusteredSample>,
    cached: Option<FixedDesign>,
}

fn validate(h_rule: &BandwidthRule, methods: &[SeMethod], reps: usize, opts: &McOptions) -> Result<()> {
    if reps == 0 {
        return Err(RdError::InvalidConfig("reps must be at least 1".into()));
    }
    if methods.is_empty() {
        return Err(RdError::InvalidConfig("at least one standard-error method is required".into()));
    }
    if !(opts.m >= 0.0 && opts.m.is_finite()) {
        return Err(RdError::NegativeM(opts.m));
    }
    if opts.j == 0 {
        return Err(RdError::InvalidConfig("J must be at least 1".into()));
    }
    if methods.contains(&SeMethod::Cnn) && CompanionConfig::new(opts.j, opts.r).support_size() == 0 {
        return Err(RdError::InvalidConfig(format!("R = {} is below 4J = {}", opts.r, 4 * opts.j)));
    }
    match *h_rule {
        BandwidthRule::Fixed { h } if !(h.is_finite() && h > 0.0) => Err(RdError::InvalidBandwidth(h)),
        BandwidthRule::PlugIn { m, .. } if !(m.is_finite() && m > 0.0) => Err(RdError::ZeroCurvature(m)),
        BandwidthRule::PlugIn { pilot: Some(p), .. } if !(p.is_finite() && p > 0.0) => Err(RdError::InvalidBandwidth(p)),
        _ => Ok(()),
    }
}

impl<'a> Runner<'a> {
    fn bandwidth(&self, sample: &ClusteredSample) -> Result<f64> {
        match *self.rule {
            BandwidthRule::Fixed { h } => Ok(h),
            BandwidthRule::PlugIn { m, constant, pilot } => {
                let h_pilot = pilot.unwrap_or_else(|| default_pilot_bandwidth(sample));
                let p = plug_in_variance_constants(sample, &self.kernel, h_pilot, self.opts.j)?;
                let v = match constant {
                    VarianceConstant::V1 => p.v1,
                    VarianceConstant::V2 => p.v2,
                };
                optimal_bandwidth(v, m, &self.kernel.constants()?, sample.n())
            }
        }
    }

    fn weights(&self, sample: &ClusteredSample, h: f64) -> Result<WeightSet> {
        let window = WindowConfig::new(h)?.with_min_per_side(self.opts.min_per_side);
        local_linear_weights(sample, &self.kernel, &window)
    }

    fn plan(&self, sample: &ClusteredSample, weights: &WeightSet, rep: u64) -> Result<Option<NeighborPlan>> {
        if !self.methods.contains(&SeMethod::Cnn) {
            return Ok(None);
        }
        let cfg = CompanionConfig { j: self.opts.j, r: self.opts.r, seed: self.dgp.config().seed.wrapping_add(rep) };
        let selection = select_companion_clusters(sample, weights, &cfg)?;
        Ok(Some(build_neighbor_sets(sample, weights, &selection)?))
    }

    fn prepare_fixed(&mut self) -> Result<()> {
        if !self.opts.fixed_design {
            return Ok(());
        }
        let x = self.dgp.design(0);
        let design = ClusteredSample::from_sizes(self.dgp.sizes(), x.clone(), vec![0.0; x.len()])?;
        if let BandwidthRule::Fixed { h } = *self.rule {
            // A design-level failure fails every replication; surface it per rep.
            if let Ok(weights) = self.weights(&design, h) {
                if let Ok(plan) = self.plan(&design, &weights, 0) {
                    let oracle_se2 = oracle_conditional_se2(&weights, &self.sigma)?;
                    self.cached = Some(FixedDesign { weights, plan, oracle_se2 });
                }
            }
        }
        self.design = Some(design);
        Ok(())
    }

    fn replicate(&self, rep: u64) -> Result<RepOutcome> {
        let sample = match &self.design {
            Some(design) => self.dgp.redraw_outcomes(design, rep)?,
            None => self.dgp.draw(rep)?.sample,
        };
        let (weights, plan, oracle_se2, h);
        let owned;
        match &self.cached {
            Some(c) => {
                weights = &c.weights;
                plan = c.plan.as_ref();
                oracle_se2 = c.oracle_se2;
                h = c.weights.h;
            }
            None => {
                h = self.bandwidth(&sample)?;
                let w = self.weights(&sample, h)?;
                let p = self.plan(&sample, &w, rep)?;
                let o = oracle_conditional_se2(&w, &self.sigma)?;
                owned = (w, p);
                weights = &owned.0;
                plan = owned.1.as_ref();
                oracle_se2 = o;
            }
        }
        let (tau_hat, fit) = rd_estimate(&sample, weights)?;
        let mut se = BTreeMap::new();
        for &method in &self.methods {
            let est = match method {
                SeMethod::Ehw => se_ehw(weights, &fit.residuals(&sample))?,
                SeMethod::NnIid => se_nn_iid(&sample, weights, self.opts.j)?,
                SeMethod::NaiveCnn => se_naive_cnn(&sample, weights, self.opts.j)?,
                SeMethod::Crr => se_crr(&sample, weights, &fit)?,
                SeMethod::Cnn => se_cnn(&sample, weights, plan.expect("plan built when CNN requested"))?,
            };
            se.insert(method, est);
        }
        let bias_m = match *self.rule {
            _ if self.opts.m > 0.0 => Some(self.opts.m),
            BandwidthRule::PlugIn { m, .. } => Some(m),
            BandwidthRule::Fixed { .. } => None,
        };
        let bias_bound = bias_m.map(|m| worst_case_bias(&sample, weights, m).map(|b| b.b_bar)).transpose()?;
        Ok(RepOutcome { rep, h, tau_hat, oracle_se2, bias_bound, se, error: None })
    }
}

/// Runs `reps` replications and aggregates them. The per-replication
/// outcomes are returned in replication order.
pub fn monte_carlo_with(
    cfg: &DgpConfig,
    h_rule: &BandwidthRule,
    methods: &[SeMethod],
    reps: usize,
    opts: &McOptions,
) -> Result<(McReport, Vec<RepOutcome>)> {
    validate(h_rule, methods, reps, opts)?;
    let dgp = Dgp::new(cfg.clone())?;
    let mut unique: Vec<SeMethod> = methods.to_vec();
    unique.sort();
    unique.dedup();
    let mut runner = Runner {
        sigma: dgp.sigma(),
        dgp,
        rule: h_rule,
        methods: unique,
        opts,
        kernel: Kernel::from_kind(opts.kernel)?,
        design: None,
        cached: None,
    };
    runner.prepare_fixed()?;

    let outcomes: Vec<RepOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            runner.replicate(rep).unwrap_or_else(|e| RepOutcome {
                rep,
                h: f64::NAN,
                tau_hat: f64::NAN,
                oracle_se2: f64::NAN,
                bias_bound: None,
                se: BTreeMap::new(),
                error: Some(e.code().to_string()),
            })
        })
        .collect();

    let report = aggregate(&outcomes, runner.dgp.config().mu.tau, &runner.methods)?;
    Ok((report, outcomes))
}

fn aggregate(outcomes: &[RepOutcome], tau: f64, methods: &[SeMethod]) -> Result<McReport> {
    let ok: Vec<&RepOutcome> = outcomes.iter().filter(|o| o.ok()).collect();
    if ok.is_empty() {
        return Err(RdError::AllReplicationsFailed(outcomes.len()));
    }
    let mut failure_codes = BTreeMap::new();
    for o in outcomes.iter().filter(|o| !o.ok()) {
        *failure_codes.entry(o.error.clone().unwrap_or_default()).or_insert(0) += 1;
    }
    let s = ok.len() as f64;
    let taus: Vec<f64> = ok.iter().map(|o| o.tau_hat).collect();
    let mean_tau_hat = mean(&taus);
    let sd_tau_hat = sd(&taus);
    let avg = |f: &dyn Fn(&RepOutcome) -> f64| ok.iter().map(|o| f(o)).collect::<CompensatedSum>().value() / s;
    let mean_oracle_se = avg(&|o| o.oracle_se());
    let mean_oracle_se2 = avg(&|o| o.oracle_se2);
    let mean_bias_bound = if ok.iter().all(|o| o.bias_bound.is_some()) {
        Some(avg(&|o| o.bias_bound.unwrap_or(0.0)))
    } else {
        None
    };

    let mut summaries = BTreeMap::new();
    for &m in methods {
        let est = |o: &RepOutcome| o.se[&m];
        let covered = ok.iter().filter(|o| (o.tau_hat - tau).abs() <= Z_95 * est(o).se).count();
        let mean_se = avg(&|o| est(o).se);
        let mean_se2 = avg(&|o| est(o).se2);
        summaries.insert(
            m,
            MethodSummary {
                coverage: covered as f64 / s,
                mean_se,
                mean_se2,
                relative_se_bias: mean_se / mean_oracle_se - 1.0,
                relative_se2_bias: mean_se2 / mean_oracle_se2 - 1.0,
                negative_count: ok.iter().filter(|o| est(o).negative).count(),
            },
        );
    }

    Ok(McReport {
        replications: outcomes.len(),
        successes: ok.len(),
        failures: outcomes.len() - ok.len(),
        tau,
        mean_tau_hat,
        sd_tau_hat,
        mean_error: mean_tau_hat - tau,
        mc_se: sd_tau_hat / s.sqrt(),
        mean_oracle_se,
        mean_oracle_se2,
        mean_h: avg(&|o| o.h),
        mean_bias_bound,
        methods: summaries,
        failure_codes,
    })
}
