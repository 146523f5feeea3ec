//! Synthetic clustered RD designs and Monte Carlo studies.

mod dgp;
mod limits;
mod montecarlo;
pub mod stats;

pub use dgp::{dgp_generate, ClusterSizes, Dgp, DgpConfig, Draw, ErrorSpec, Framework, MuSpec, XMode, X_BOUND};
pub use limits::{variance_limit_check, LimitForm, LimitReport};
pub use montecarlo::{
    monte_carlo, monte_carlo_with, run_simulation, BandwidthRule, McOptions, McReport, MethodSummary, RepOutcome,
    SimulationConfig,
};
