//! Command-line front end: argument parsing, run configuration, and the
//! writers for every report artifact.
//!
//! Errors reach the user as one JSON object on stderr,
//! `{"error": {"class": ..., "message": ...}}`, with exit code 2 for
//! configuration problems, 3 for bad data and 4 for numerical failures.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use causal_match::dataset::MedianPooling;
use causal_match::error::ErrorClass;
use causal_match::{Error, Result, WeightingScheme};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{Format, RunConfig, TrimBorder};

/// Environment variable capping the worker threads used for trials.
pub const THREADS_ENV: &str = "CAUSAL_MATCH_THREADS";

#[derive(Debug, Parser)]
#[command(name = "causal-match", version, about = "Propensity-score analysis of observational data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic dataset with known effects.
    Simulate(SimulateArgs),
    /// Repeated-subsample effect estimation with balance diagnostics.
    Analyze(AnalyzeArgs),
    /// Propensity weights and balance diagnostics on the full data.
    Balance(AnalyzeArgs),
    /// Slopes of outcome on treatment within quantile bins of a confounder.
    Simpson(SimpsonArgs),
    /// Exact checks of the propensity-score identities on discrete models.
    CheckAppendixB(CheckArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generator spec as JSON; the built-in default when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of units.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Random seed; equal seeds give identical output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for data.csv and truth.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Add the y0 and y1 columns.
    #[arg(long)]
    pub with_potential: bool,
}

/// Flags shared by every command that reads a data file. Each one
/// overrides the matching field of `--config`.
#[derive(Debug, Args)]
pub struct DataArgs {
    /// Run config (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Treatment column: 0/1, or continuous with --dichotomize.
    #[arg(long)]
    pub treatment: Option<String>,
    /// Outcome column.
    #[arg(long)]
    pub outcome: Option<String>,
    /// Comma-separated confounder columns.
    #[arg(long, value_delimiter = ',')]
    pub confounders: Option<Vec<String>>,
    /// Square-root the continuous treatment before dichotomizing.
    #[arg(long)]
    pub sqrt_treatment: bool,
    /// `median` or a fixed threshold; treated means strictly above it.
    #[arg(long, value_parser = config::parse_dichotomize)]
    pub dichotomize: Option<causal_match::dataset::DichotomizeRule>,
    /// Compute the median over all rows or separately per date.
    #[arg(long, value_enum)]
    pub median_pooling: Option<Pooling>,
    /// Drop units within this many grid points of the domain edge.
    #[arg(long, requires_all = ["grid_rows", "grid_cols"])]
    pub trim_border: Option<usize>,
    /// Grid rows per date, for --trim-border.
    #[arg(long)]
    pub grid_rows: Option<usize>,
    /// Grid columns per date, for --trim-border.
    #[arg(long)]
    pub grid_cols: Option<usize>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated output formats.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub format: Option<Vec<Format>>,
    /// Leave the generated-at field out of SVG files.
    #[arg(long)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Pooling {
    Joint,
    PerDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Ipw,
    Nn,
    Subclass,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Weighting scheme.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Nearest-neighbour caliper in standard deviations of the linear predictor.
    #[arg(long)]
    pub caliper: Option<f64>,
    /// Use each control at most once in nearest-neighbour matching.
    #[arg(long)]
    pub without_replacement: bool,
    /// Number of propensity-score strata for subclassification.
    #[arg(long)]
    pub strata: Option<usize>,
    /// Number of random subsamples.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Units per subsample; all units when omitted.
    #[arg(long)]
    pub sample_size: Option<usize>,
    /// Random seed; equal seeds give identical output.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of Q-Q probabilities.
    #[arg(long)]
    pub qq_points: Option<usize>,
    /// Size of the resampled pseudo-population; twice the sample size by default.
    #[arg(long)]
    pub pseudo_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimpsonArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Stratifying confounder.
    #[arg(long)]
    pub confounder: String,
    /// Requested number of quantile bins; sparse bins are merged.
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Number of random discrete models.
    #[arg(long, default_value_t = 20)]
    pub models: usize,
    /// Random seed; equal seeds give identical output.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `appendix_b.json`; stdout only when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn base_config(data: &DataArgs) -> Result<RunConfig> {
    let mut cfg = match &data.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::blank(),
    };
    if let Some(v) = &data.input {
        cfg.input = v.clone();
    }
    if let Some(v) = &data.treatment {
        cfg.treatment = v.clone();
    }
    if let Some(v) = &data.outcome {
        cfg.outcome = v.clone();
    }
    if let Some(v) = &data.confounders {
        cfg.confounders = v.clone();
    }
    if data.sqrt_treatment {
        cfg.sqrt_treatment = true;
    }
    if data.dichotomize.is_some() {
        cfg.dichotomize = data.dichotomize;
    }
    if let Some(p) = data.median_pooling {
        cfg.median_pooling = match p {
            Pooling::Joint => MedianPooling::Joint,
            Pooling::PerDate => MedianPooling::PerDate,
        };
    }
    if let (Some(margin), Some(rows), Some(cols)) = (data.trim_border, data.grid_rows, data.grid_cols) {
        cfg.trim_border = Some(TrimBorder { margin, rows, cols });
    }
    if let Some(v) = &data.out {
        cfg.out = v.clone();
    }
    if let Some(v) = &data.format {
        let mut f = v.clone();
        f.sort();
        f.dedup();
        cfg.formats = f;
    }
    if data.no_timestamp {
        cfg.svg_timestamp = false;
    }
    Ok(cfg)
}

/// Merges `--config` and flags into one config. Nothing is validated here.
pub fn analyze_config(args: &AnalyzeArgs) -> Result<RunConfig> {
    let mut cfg = base_config(&args.data)?;
    let kind = match args.scheme {
        Some(s) => s,
        None => match cfg.weighting {
            WeightingScheme::Ipw => SchemeArg::Ipw,
            WeightingScheme::Nn { .. } => SchemeArg::Nn,
            WeightingScheme::Subclass { .. } => SchemeArg::Subclass,
        },
    };
    if kind != SchemeArg::Nn && (args.caliper.is_some() || args.without_replacement) {
        return Err(Error::Config("--caliper and --without-replacement apply to --scheme nn only".into()));
    }
    if kind != SchemeArg::Subclass && args.strata.is_some() {
        return Err(Error::Config("--strata applies to --scheme subclass only".into()));
    }
    cfg.weighting = match (kind, cfg.weighting) {
        (SchemeArg::Ipw, _) => WeightingScheme::Ipw,
        (SchemeArg::Nn, WeightingScheme::Nn { with_replacement, caliper }) => WeightingScheme::Nn {
            with_replacement: with_replacement && !args.without_replacement,
            caliper: args.caliper.or(caliper),
        },
        (SchemeArg::Nn, _) => WeightingScheme::Nn {
            with_replacement: !args.without_replacement,
            caliper: args.caliper,
        },
        (SchemeArg::Subclass, WeightingScheme::Subclass { n_strata }) => WeightingScheme::Subclass {
            n_strata: args.strata.unwrap_or(n_strata),
        },
        (SchemeArg::Subclass, _) => WeightingScheme::Subclass { n_strata: args.strata.unwrap_or(5) },
    };
    if let Some(v) = args.trials {
        cfg.n_trials = v;
    }
    if args.sample_size.is_some() {
        cfg.sample_size = args.sample_size;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.qq_points {
        cfg.qq_points = v;
    }
    if args.pseudo_size.is_some() {
        cfg.pseudo_population_size = args.pseudo_size;
    }
    Ok(cfg)
}

/// Applies `CAUSAL_MATCH_THREADS` to the global rayon pool. A pool that
/// already exists (a second call in one process) is left as it is.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

pub fn error_json(e: &Error) -> String {
    let class = match e.class() {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numerical => "numerical",
    };
    serde_json::json!({ "error": { "class": class, "code": exit_code(e), "message": e.to_string() } }).to_string()
}

pub fn run_command(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Analyze(a) => {
            let cfg = analyze_config(&a)?;
            commands::analyze(&cfg).map(|_| ())
        }
        Command::Balance(a) => {
            let cfg = analyze_config(&a)?;
            commands::balance(&cfg)
        }
        Command::Simpson(a) => {
            let cfg = base_config(&a.data)?;
            commands::simpson(&cfg, &a.confounder, a.bins).map(|_| ())
        }
        Command::CheckAppendixB(a) => commands::check_appendix_b(&a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Help and version requests print normally and exit 0.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = Error::Config(e.render().to_string().trim().to_string());
            eprintln!("{}", error_json(&err));
            return 2;
        }
    };
    match run_command(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
