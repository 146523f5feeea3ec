//! Sharp regression-discontinuity estimation with clustered data.
//!
//! The crate computes local linear RD weights and the point estimate, a
//! worst-case bias bound, five standard errors (EHW, i.i.d. nearest neighbors,
//! naive clustered nearest neighbors, clustered regression residuals and
//! clustered nearest neighbors with companion clusters), cluster-influence
//! diagnostics and bandwidth rules. [`simlab`] generates clustered designs
//! with known covariance and runs Monte Carlo studies on them.
//!
//! ```
//! use rdclust::{validate_sample, local_linear_weights, rd_estimate, Kernel, WindowConfig};
//!
//! let rows: Vec<(String, f64, f64)> = (0..40)
//!     .map(|i| {
//!         let x = -1.0 + i as f64 / 20.0 + 0.01;
//!         ((i / 2).to_string(), x, 0.5 * x + if x >= 0.0 { 1.0 } else { 0.0 })
//!     })
//!     .collect();
//! let sample = validate_sample(&rows, 0.0).unwrap();
//! let weights = local_linear_weights(&sample, &Kernel::Triangular, &WindowConfig::new(0.8).unwrap()).unwrap();
//! let (tau, _fit) = rd_estimate(&sample, &weights).unwrap();
//! assert!((tau - 1.0).abs() < 1e-10);
//! ```

pub mod analysis;
pub mod bandwidth;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod kernel;
mod neighbors;
pub mod sample;
pub mod simlab;
pub mod variance;

pub use bandwidth::{default_pilot_bandwidth, optimal_bandwidth, plug_in_variance_constants, PlugInConstants};
pub use diagnostics::{cluster_weight_ratios, rule_of_thumb, ClusterDiagnostics, Verdict};
pub use error::{RdError, Result, Side};
pub use estimator::{
    lambda_n, local_linear_weights, rd_estimate, side_moments, worst_case_bias, BiasBound, LocalFit, SideMoments,
    WeightSet,
};
pub use kernel::{kernel_constants, Kernel, KernelConstants, KernelKind};
pub use sample::{validate_sample, ClusteredSample, WindowConfig};
pub use variance::{
    build_neighbor_sets, neighbor_distance_diag, oracle_conditional_se, se_cnn, se_crr, se_ehw, se_naive_cnn,
    se_nn_iid, select_companion_clusters, CompanionConfig, CompanionSelection, NeighborPlan, SeEstimate, SigmaOracle,
};

/// Two-sided 95% normal critical value.
pub const Z_95: f64 = 1.959964;
