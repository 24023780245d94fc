use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod aggregate;
mod estimate;
mod report;
mod simulate;

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "voie", version, about = "Value of iterative experimentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact moments or Monte Carlo coverage of an estimator on a population.
    Simulate(SimulateArgs),
    /// Estimate VOIE from unit-level rows or bucket summaries.
    Estimate(EstimateArgs),
    /// Combine per-experiment estimates.
    Aggregate(AggregateArgs),
    /// Filter an experiment log and report grouped aggregates.
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimMode {
    Enumerate,
    Mc,
}

#[derive(Args)]
struct SimulateArgs {
    /// Potential-outcome table (delimited).
    #[arg(long, conflicts_with = "generator", required_unless_present = "generator")]
    table: Option<PathBuf>,
    /// Synthetic population settings, e.g. `baseline=0:10,effect2=0:2,drift=-1:1`.
    #[arg(long)]
    generator: Option<String>,
    /// Population size for the generator.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    p1: f64,
    #[arg(long, default_value_t = 0.5)]
    p2: f64,
    /// progressive | repeated-max-power
    #[arg(long, default_value = "progressive")]
    kind: String,
    /// Permit a second ramp other than 50%.
    #[arg(long)]
    allow_nonstandard: bool,
    /// Size the (c,v2) bucket as (1 - p1) p2 N.
    #[arg(long)]
    appendix_sizes: bool,
    #[arg(long, value_enum, default_value_t = SimMode::Enumerate)]
    mode: SimMode,
    #[arg(long, default_value_t = 10_000)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enumerate in exact rational arithmetic.
    #[arg(long)]
    exact: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// `path,y1,y2[,variant]` rows or `bucket,count,mean,variance` rows.
    input: PathBuf,
    /// progressive | repeated-max-power | de-ramp | multi-variant | collapsed
    #[arg(long, default_value = "progressive")]
    kind: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Variant shares for multi-variant data, e.g. `A=0.05,B=0.05`.
    #[arg(long)]
    split: Option<String>,
    /// Variant carried into the second iteration.
    #[arg(long)]
    winner: Option<String>,
    /// Report a point estimate when a bucket is too small for a variance.
    #[arg(long)]
    allow_missing_variance: bool,
    /// Print a header line before the record.
    #[arg(long)]
    header: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightSource {
    Inverse,
    File,
}

#[derive(Args)]
struct Baselines {
    /// Metric baseline of the previous period, for normalized effects.
    #[arg(long, requires = "baseline_curr")]
    baseline_prev: Option<f64>,
    #[arg(long, requires = "baseline_prev")]
    baseline_curr: Option<f64>,
}

impl Baselines {
    fn pair(&self) -> Option<(f64, f64)> {
        self.baseline_prev.zip(self.baseline_curr)
    }
}

#[derive(Args)]
struct AggregateArgs {
    /// `id,tau_hat,var_upper_hat[,weight]` rows.
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = WeightSource::Inverse)]
    weights: WeightSource,
    #[command(flatten)]
    baselines: Baselines,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Student-t degrees of freedom for the zero test (default normal).
    #[arg(long)]
    df: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment log with a `# voie-log/v1` header.
    input: PathBuf,
    /// delimited | structured-text
    #[arg(long, default_value = "delimited")]
    format: String,
    /// month | allocation | team
    #[arg(long, default_value = "month")]
    group_by: String,
    #[arg(long, default_value_t = voie::ingest::DEFAULT_MIN_SAMPLES)]
    min_samples: usize,
    #[arg(long, default_value_t = voie::ingest::DEFAULT_MIN_DAYS)]
    min_days: u32,
    #[arg(long, default_value_t = voie::ingest::DEFAULT_MAX_DAYS)]
    max_days: u32,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    baselines: Baselines,
    /// Report destination (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-day effect quantiles here.
    #[arg(long)]
    quantiles_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Estimate(a) => estimate::run(&a),
        Command::Aggregate(a) => aggregate::run(&a),
        Command::Report(a) => report::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Empty string for absent values.
fn cell<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
