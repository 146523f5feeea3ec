//! End-to-end pipeline: weights, estimate, standard errors, diagnostics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bandwidth::{default_pilot_bandwidth, optimal_bandwidth, plug_in_variance_constants, PlugInConstants};
use crate::diagnostics::{cluster_weight_ratios, Verdict, DEFAULT_ETA_MAX, DEFAULT_ETA_SUM};
use crate::error::{RdError, Result};
use crate::estimator::{lambda_n, local_linear_weights, rd_estimate, worst_case_bias, LocalFit, WeightSet};
use crate::kernel::Kernel;
use crate::sample::{ClusteredSample, WindowConfig};
use crate::variance::{
    build_neighbor_sets, neighbor_distance_diag, se_cnn, se_crr, se_ehw, se_naive_cnn, se_nn_iid,
    select_companion_clusters, CompanionConfig, NeighborPlan, SeEstimate,
};
use crate::Z_95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMethod {
    Ehw,
    NnIid,
    NaiveCnn,
    Crr,
    Cnn,
}

impl SeMethod {
    pub const ALL: [SeMethod; 5] = [SeMethod::Ehw, SeMethod::NnIid, SeMethod::NaiveCnn, SeMethod::Crr, SeMethod::Cnn];

    pub fn as_str(self) -> &'static str {
        match self {
            SeMethod::Ehw => "ehw",
            SeMethod::NnIid => "nn_iid",
            SeMethod::NaiveCnn => "naive_cnn",
            SeMethod::Crr => "crr",
            SeMethod::Cnn => "cnn",
        }
    }
}

impl fmt::Display for SeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeMethod {
    type Err = RdError;

    fn from_str(s: &str) -> Result<SeMethod> {
        SeMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| RdError::InvalidConfig(format!("unknown standard-error method '{s}'")))
    }
}

/// Which plug-in variance constant drives the automatic bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceConstant {
    /// Ignores within-cluster covariance.
    V1,
    /// Includes the within-cluster covariance term.
    #[default]
    V2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthChoice {
    Fixed(f64),
    /// Plug-in worst-case-MSE bandwidth; needs `M > 0`.
    Auto { constant: VarianceConstant, pilot: Option<f64> },
}

#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub bandwidth: BandwidthChoice,
    pub kernel: Kernel,
    pub j: usize,
    pub r: usize,
    /// Bound on `|μ''|`; zero omits the bias bound.
    pub m: f64,
    pub seed: u64,
    pub methods: Vec<SeMethod>,
    pub eta_max: f64,
    pub eta_sum: f64,
    pub min_per_side: usize,
}

impl AnalysisConfig {
    pub fn new(h: f64) -> AnalysisConfig {
        AnalysisConfig {
            bandwidth: BandwidthChoice::Fixed(h),
            kernel: Kernel::Triangular,
            j: 3,
            r: 36,
            m: 0.0,
            seed: 0,
            methods: SeMethod::ALL.to_vec(),
            eta_max: DEFAULT_ETA_MAX,
            eta_sum: DEFAULT_ETA_SUM,
            min_per_side: WindowConfig::DEFAULT_MIN_PER_SIDE,
        }
    }

    fn wants(&self, m: SeMethod) -> bool {
        self.methods.contains(&m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    /// `sqrt(max(se2, 0))`.
    pub value: f64,
    pub se2: f64,
    /// Raw variance estimate was negative.
    pub negative: bool,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl MethodReport {
    pub fn new(tau: f64, est: SeEstimate) -> MethodReport {
        MethodReport {
            value: est.se,
            se2: est.se2,
            negative: est.negative,
            ci_lower: tau - Z_95 * est.se,
            ci_upper: tau + Z_95 * est.se,
        }
    }
}

/// Requested methods only; the others are absent from the JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeReports {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ehw: Option<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nn_iid: Option<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub naive_cnn: Option<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crr: Option<MethodReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnn: Option<MethodReport>,
}

impl SeReports {
    pub fn get(&self, m: SeMethod) -> Option<&MethodReport> {
        match m {
            SeMethod::Ehw => self.ehw.as_ref(),
            SeMethod::NnIid => self.nn_iid.as_ref(),
            SeMethod::NaiveCnn => self.naive_cnn.as_ref(),
            SeMethod::Crr => self.crr.as_ref(),
            SeMethod::Cnn => self.cnn.as_ref(),
        }
    }

    fn slot(&mut self, m: SeMethod) -> &mut Option<MethodReport> {
        match m {
            SeMethod::Ehw => &mut self.ehw,
            SeMethod::NnIid => &mut self.nn_iid,
            SeMethod::NaiveCnn => &mut self.naive_cnn,
            SeMethod::Crr => &mut self.crr,
            SeMethod::Cnn => &mut self.cnn,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthReport {
    /// `"fixed"` or `"auto"`.
    pub rule: String,
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_constant: Option<VarianceConstant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plug_in: Option<PlugInConstants>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub w_max: f64,
    pub w_sum: f64,
    pub verdict: Verdict,
    pub eta_max: f64,
    pub eta_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub tau_hat: f64,
    pub se: SeReports,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    pub h: f64,
    pub kernel: String,
    pub cutoff: f64,
    pub n: usize,
    pub g: usize,
    pub n_h: usize,
    pub g_h: usize,
    pub lambda_n: f64,
    pub diagnostics: DiagnosticsReport,
    /// Largest running-variable gap between a weighted unit and one of its
    /// CNN neighbors; present when the CNN plan was built.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_h: Option<f64>,
    pub j: usize,
    pub r: usize,
    pub seed: u64,
    pub bandwidth: BandwidthReport,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: EstimateReport,
    pub weights: WeightSet,
    pub fit: LocalFit,
    pub plan: Option<NeighborPlan>,
}

fn choose_bandwidth(sample: &ClusteredSample, cfg: &AnalysisConfig) -> Result<BandwidthReport> {
    match cfg.bandwidth {
        BandwidthChoice::Fixed(h) => {
            if !(h.is_finite() && h > 0.0) {
                return Err(RdError::InvalidBandwidth(h));
            }
            Ok(BandwidthReport { rule: "fixed".into(), h, variance_constant: None, plug_in: None })
        }
        BandwidthChoice::Auto { constant, pilot } => {
            if !(cfg.m > 0.0) {
                return Err(RdError::ZeroCurvature(cfg.m));
            }
            let h_pilot = pilot.unwrap_or_else(|| default_pilot_bandwidth(sample));
            let p = plug_in_variance_constants(sample, &cfg.kernel, h_pilot, cfg.j)?;
            let v = match constant {
                VarianceConstant::V1 => p.v1,
                VarianceConstant::V2 => p.v2,
            };
            let h = optimal_bandwidth(v, cfg.m, &cfg.kernel.constants()?, sample.n())?;
            Ok(BandwidthReport { rule: "auto".into(), h, variance_constant: Some(constant), plug_in: Some(p) })
        }
    }
}

pub fn run_analysis(sample: &ClusteredSample, cfg: &AnalysisConfig) -> Result<Analysis> {
    if !(cfg.m >= 0.0 && cfg.m.is_finite()) {
        return Err(RdError::NegativeM(cfg.m));
    }
    if !(cfg.eta_max >= 0.0 && cfg.eta_sum >= 0.0) {
        return Err(RdError::InvalidConfig("diagnostic thresholds must be nonnegative".into()));
    }
    let bandwidth = choose_bandwidth(sample, cfg)?;
    let h = bandwidth.h;
    let window = WindowConfig::new(h)?.with_min_per_side(cfg.min_per_side);
    let weights = local_linear_weights(sample, &cfg.kernel, &window)?;
    let (tau_hat, fit) = rd_estimate(sample, &weights)?;

    let mut se = SeReports::default();
    let mut plan = None;
    for method in SeMethod::ALL.into_iter().filter(|&m| cfg.wants(m)) {
        let est = match method {
            SeMethod::Ehw => se_ehw(&weights, &fit.residuals(sample))?,
            SeMethod::NnIid => se_nn_iid(sample, &weights, cfg.j)?,
            SeMethod::NaiveCnn => se_naive_cnn(sample, &weights, cfg.j)?,
            SeMethod::Crr => se_crr(sample, &weights, &fit)?,
            SeMethod::Cnn => {
                let companions = CompanionConfig { j: cfg.j, r: cfg.r, seed: cfg.seed };
                let selection = select_companion_clusters(sample, &weights, &companions)?;
                let p = build_neighbor_sets(sample, &weights, &selection)?;
                let est = se_cnn(sample, &weights, &p)?;
                plan = Some(p);
                est
            }
        };
        *se.slot(method) = Some(MethodReport::new(tau_hat, est));
    }

    let diag = cluster_weight_ratios(sample, &weights)?.with_verdict(cfg.eta_max, cfg.eta_sum);
    let bias_bound = if cfg.m > 0.0 { Some(worst_case_bias(sample, &weights, cfg.m)?.b_bar) } else { None };
    let report = EstimateReport {
        tau_hat,
        se,
        bias_bound,
        m: (cfg.m > 0.0).then_some(cfg.m),
        h,
        kernel: cfg.kernel.kind().to_string(),
        cutoff: sample.cutoff(),
        n: sample.n(),
        g: sample.num_clusters(),
        n_h: weights.n_in_window(),
        g_h: weights.clusters_in_window(sample),
        lambda_n: lambda_n(sample, h),
        diagnostics: DiagnosticsReport {
            w_max: diag.w_max,
            w_sum: diag.w_sum,
            verdict: diag.verdict.expect("verdict set above"),
            eta_max: diag.eta_max,
            eta_sum: diag.eta_sum,
        },
        d_h: plan.as_ref().map(|p| neighbor_distance_diag(sample, &weights, p)),
        j: cfg.j,
        r: cfg.r,
        seed: cfg.seed,
        bandwidth,
    };
    Ok(Analysis { report, weights, fit, plan })
}

/// Mean outcome in equal-width running-variable bins, on the original scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub mean_y: f64,
    pub count: usize,
}

/// `bins_per_side` bins on each side of the cutoff spanning the data range;
/// empty bins are dropped. Bins never straddle the cutoff.
pub fn plot_bins(sample: &ClusteredSample, bins_per_side: usize) -> Vec<PlotBin> {
    let bins_per_side = bins_per_side.max(1);
    let x = sample.x();
    let y = sample.y();
    let lo = x.iter().copied().fold(0.0, f64::min);
    let hi = x.iter().copied().fold(0.0, f64::max);
    let mut out = Vec::new();
    for (a, b, below) in [(lo, 0.0, true), (0.0, hi, false)] {
        if b <= a {
            continue;
        }
        let width = (b - a) / bins_per_side as f64;
        let mut sum = vec![0.0; bins_per_side];
        let mut count = vec![0usize; bins_per_side];
        for (&xi, &yi) in x.iter().zip(y) {
            if below != (xi < 0.0) {
                continue;
            }
            let k = (((xi - a) / width).floor().max(0.0) as usize).min(bins_per_side - 1);
            sum[k] += yi;
            count[k] += 1;
        }
        for k in 0..bins_per_side {
            if count[k] == 0 {
                continue;
            }
            let left = a + k as f64 * width;
            let right = if k + 1 == bins_per_side { b } else { a + (k + 1) as f64 * width };
            out.push(PlotBin {
                bin_left: left + sample.cutoff(),
                bin_right: right + sample.cutoff(),
                mean_y: sum[k] / count[k] as f64,
                count: count[k],
            });
        }
    }
    out
}
