//! `rdclust analyze` and `rdclust simulate`.

mod config;
mod json;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rdclust::analysis::{plot_bins, run_analysis, AnalysisConfig, BandwidthChoice, SeMethod, VarianceConstant};
use rdclust::simlab::{run_simulation, RepOutcome};
use rdclust::{validate_sample, ClusteredSample, Kernel, KernelKind, RdError};
use serde_json::json;

#[derive(Parser)]
#[command(name = "rdclust", version, about = "Regression-discontinuity estimation with clustered data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the discontinuity and its standard errors from a `cluster,x,y` CSV.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo study described by a config file.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Uniform,
    Triangular,
    Epanechnikov,
}

impl From<KernelArg> for KernelKind {
    fn from(k: KernelArg) -> KernelKind {
        match k {
            KernelArg::Uniform => KernelKind::Uniform,
            KernelArg::Triangular => KernelKind::Triangular,
            KernelArg::Epanechnikov => KernelKind::Epanechnikov,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstantArg {
    V1,
    V2,
}

#[derive(clap::Args)]
struct AnalyzeArgs {
    /// Input CSV with header `cluster,x,y`.
    csv: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    cutoff: f64,
    #[arg(long, required_unless_present = "auto_bandwidth", conflicts_with = "auto_bandwidth")]
    bandwidth: Option<f64>,
    /// Plug-in worst-case-MSE bandwidth (needs --M > 0).
    #[arg(long)]
    auto_bandwidth: bool,
    /// Variance constant for --auto-bandwidth.
    #[arg(long, value_enum, default_value = "v2")]
    variance_constant: ConstantArg,
    /// Pilot bandwidth for --auto-bandwidth (default 1.84·sd(x)·n^(-1/5)).
    #[arg(long)]
    pilot_bandwidth: Option<f64>,
    #[arg(long, value_enum, default_value = "triangular")]
    kernel: KernelArg,
    /// Nearest neighbors per unit.
    #[arg(long = "J", default_value_t = 3)]
    j: usize,
    /// Maximum companion reuse.
    #[arg(long = "R", default_value_t = 36)]
    r: usize,
    /// Bound on the second derivative of the regression function; 0 omits
    /// the bias bound.
    #[arg(long = "M", default_value_t = 0.0)]
    m: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard errors to compute (ehw, nn_iid, naive_cnn, crr, cnn).
    #[arg(long = "se-method", value_delimiter = ',')]
    se_method: Vec<String>,
    #[arg(long, default_value_t = rdclust::diagnostics::DEFAULT_ETA_MAX)]
    eta_max: f64,
    #[arg(long, default_value_t = rdclust::diagnostics::DEFAULT_ETA_SUM)]
    eta_sum: f64,
    /// Write companion clusters and neighbor sets as JSON.
    #[arg(long)]
    dump_plan: Option<PathBuf>,
    /// Write binned means of y by x as CSV.
    #[arg(long)]
    plot_data: Option<PathBuf>,
    /// Bins per side for --plot-data.
    #[arg(long, default_value_t = 20)]
    bins: usize,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// JSON or `key = value` config.
    config: PathBuf,
    /// Write one CSV row per replication.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

/// A failure with its exit code and machine-readable tag.
struct Failure {
    exit: u8,
    code: &'static str,
    message: String,
}

impl Failure {
    fn input(code: &'static str, message: impl Into<String>) -> Failure {
        Failure { exit: 2, code, message: message.into() }
    }
}

impl From<RdError> for Failure {
    fn from(e: RdError) -> Failure {
        let exit = match &e {
            RdError::AllReplicationsFailed(_) => 4,
            e if e.is_estimation_precondition() => 3,
            _ => 2,
        };
        Failure { exit, code: e.code(), message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(args) => analyze(&args),
        Command::Simulate(args) => simulate(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = json!({ "error": { "code": f.code, "message": f.message, "exit_code": f.exit } });
            eprintln!("{body}");
            ExitCode::from(f.exit)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::input("io_error", format!("{}: {e}", path.display())))
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Failure::input("io_error", e.to_string()))
}

fn read_sample(path: &Path, cutoff: f64) -> Result<ClusteredSample, Failure> {
    let schema = |m: String| Failure::input("schema_error", m);
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| schema(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| schema(e.to_string()))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| schema(format!("missing column `{name}` (expected header cluster,x,y)")))
    };
    let (ci, xi, yi) = (column("cluster")?, column("x")?, column("y")?);
    let mut rows = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| schema(e.to_string()))?;
        let line = k + 2;
        let field = |i: usize| record.get(i).ok_or_else(|| schema(format!("line {line}: missing field")));
        let number = |i: usize, name: &str| -> Result<f64, Failure> {
            let raw = field(i)?;
            raw.parse::<f64>().map_err(|_| schema(format!("line {line}: `{raw}` is not a number in column {name}")))
        };
        rows.push((field(ci)?.to_string(), number(xi, "x")?, number(yi, "y")?));
    }
    validate_sample(&rows, cutoff).map_err(|e| match e {
        RdError::EmptyInput | RdError::NonFiniteValue { .. } | RdError::NonFiniteCutoff => {
            Failure { exit: 2, code: "schema_error", message: e.to_string() }
        }
        other => other.into(),
    })
}

fn analyze(args: &AnalyzeArgs) -> Result<(), Failure> {
    let sample = read_sample(&args.csv, args.cutoff)?;
    let methods = if args.se_method.is_empty() {
        SeMethod::ALL.to_vec()
    } else {
        let mut m = args
            .se_method
            .iter()
            .map(|s| s.parse::<SeMethod>())
            .collect::<Result<Vec<_>, _>>()?;
        m.sort();
        m.dedup();
        m
    };
    if args.dump_plan.is_some() && !methods.contains(&SeMethod::Cnn) {
        return Err(Failure::input("invalid_config", "--dump-plan needs the cnn standard error"));
    }
    let bandwidth = match (args.bandwidth, args.auto_bandwidth) {
        (Some(h), _) => BandwidthChoice::Fixed(h),
        (None, _) => BandwidthChoice::Auto {
            constant: match args.variance_constant {
                ConstantArg::V1 => VarianceConstant::V1,
                ConstantArg::V2 => VarianceConstant::V2,
            },
            pilot: args.pilot_bandwidth,
        },
    };
    let cfg = AnalysisConfig {
        bandwidth,
        kernel: Kernel::from_kind(args.kernel.into())?,
        j: args.j,
        r: args.r,
        m: args.m,
        seed: args.seed,
        methods,
        eta_max: args.eta_max,
        eta_sum: args.eta_sum,
        ..AnalysisConfig::new(1.0)
    };
    let analysis = run_analysis(&sample, &cfg)?;

    if let Some(path) = &args.dump_plan {
        let plan = analysis.plan.as_ref().expect("cnn requested").dump(&sample);
        write_file(path, &json::to_string(&plan).map_err(|e| Failure::input("io_error", e.to_string()))?)?;
    }
    if let Some(path) = &args.plot_data {
        let mut w = csv::Writer::from_writer(Vec::new());
        for bin in plot_bins(&sample, args.bins) {
            w.serialize(bin).map_err(|e| Failure::input("io_error", e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::input("io_error", e.to_string()))?;
        write_file(path, &String::from_utf8(bytes).expect("csv writes UTF-8"))?;
    }
    emit(&json::to_string(&analysis.report).map_err(|e| Failure::input("io_error", e.to_string()))?)
}

fn trace_csv(outcomes: &[RepOutcome], methods: &[SeMethod]) -> String {
    let num = |v: f64| if v.is_finite() { format!("{v:.16e}") } else { String::new() };
    let mut out = String::from("rep,status,h,tau_hat,oracle_se,bias_bound");
    for m in methods {
        out.push_str(&format!(",se_{m},se2_{m}"));
    }
    out.push('\n');
    for o in outcomes {
        let status = o.error.as_deref().unwrap_or("ok");
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            o.rep,
            status,
            num(o.h),
            num(o.tau_hat),
            num(o.oracle_se()),
            o.bias_bound.map(num).unwrap_or_default()
        ));
        for m in methods {
            match o.se.get(m) {
                Some(e) => out.push_str(&format!(",{},{}", num(e.se), num(e.se2))),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::input("config_error", format!("{}: {e}", args.config.display())))?;
    let cfg = config::parse_config(&text).map_err(|m| Failure::input("config_error", m))?;
    if args.threads == 0 {
        return Err(Failure::input("invalid_config", "--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| Failure::input("invalid_config", e.to_string()))?;
    let (report, outcomes) = pool.install(|| run_simulation(&cfg))?;
    if let Some(path) = &args.trace {
        let mut methods = cfg.methods.clone();
        methods.sort();
        methods.dedup();
        write_file(path, &trace_csv(&outcomes, &methods))?;
    }
    emit(&json::to_string(&report).map_err(|e| Failure::input("io_error", e.to_string()))?)
}
