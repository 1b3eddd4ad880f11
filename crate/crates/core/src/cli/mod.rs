//! `hemoid` command-line interface.
//!
//! Every command resolves its settings from flags and an optional JSON config
//! file (flags win), validates them, runs, and only then writes its outputs
//! together with a `manifest.json`. Exit codes: 0 success, 2 validation,
//! 3 I/O, 4 numerical failure.

mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ConfigFile, Cutoff};
pub use output::{fingerprint, sha256_hex, Outputs, SCHEMA_VERSION};

use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "hemoid", version, about = "Sparse identification of pressure dynamics from pressure/velocity recordings")]
pub struct Cli {
    /// Worker threads [default: logical CPUs].
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON file with default settings; flags override its keys.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Identify a sparse model for one or more thresholds.
    Fit(FitArgs),
    /// Simulate a saved model against a recording.
    Simulate(SimulateArgs),
    /// Train on leading cycles and score the last cycle.
    Forecast(ForecastArgs),
    /// Compare fits of the two halves of a recording with the full fit.
    SplitHalf(SplitHalfArgs),
    /// Evaluate the softmax classifier over random partitions.
    Classify(ClassifyArgs),
    /// Generate a synthetic recording.
    Synth(SynthArgs),
    /// Time repeated fits for one or more libraries.
    Bench(BenchArgs),
    /// Damping regime of each parameter set under both criteria.
    Damping(DampingArgs),
}

#[derive(Debug, Args)]
pub struct SignalArgs {
    /// `t,p,v` CSV recording.
    pub input: Option<PathBuf>,
    /// Units JSON [default: <input>.units.json when present].
    #[arg(long, value_name = "FILE")]
    pub units: Option<PathBuf>,
    /// Low-pass cutoff in Hz, or `off`. Required.
    #[arg(long, value_name = "HZ|off", value_parser = parse_cutoff)]
    pub cutoff_hz: Option<Cutoff>,
    /// Keep the time-averaged pressure and velocity.
    #[arg(long)]
    pub no_subtract_mean: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `eq2` (nine terms), `linear`, or a JSON file of exponent triples.
    #[arg(long, value_name = "NAME|FILE")]
    pub library: Option<String>,
    /// Sparsity threshold [default: 5].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Rows dropped from each end of the design matrix [default: 2].
    #[arg(long)]
    pub boundary_trim: Option<usize>,
    /// Never eliminate the forcing term.
    #[arg(long)]
    pub exempt_forcing: bool,
    /// Threshold coefficients of unit-RMS columns.
    #[arg(long)]
    pub normalize: bool,
}

#[derive(Debug, Args)]
pub struct CycleArgs {
    /// Minimum peak spacing in seconds [default: 0.4].
    #[arg(long)]
    pub min_separation_s: Option<f64>,
    /// Moving-average width before peak search, seconds [default: 0.05].
    #[arg(long)]
    pub smoothing_s: Option<f64>,
    /// Peak height floor as a fraction of the range [default: 0.5].
    #[arg(long)]
    pub relative_height: Option<f64>,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, short, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub signal: SignalArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated thresholds; one model file each.
    #[arg(long, value_delimiter = ',', conflicts_with = "eta")]
    pub etas: Option<Vec<f64>>,
    /// RK4 steps per sample for the validation simulation [default: 4].
    #[arg(long)]
    pub substeps: Option<usize>,
    /// Also export phase-portrait CSVs.
    #[arg(long)]
    pub phase: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub signal: SignalArgs,
    /// Model JSON written by `fit`, or a bare model object.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[command(flatten)]
    pub cycles: CycleArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub signal: SignalArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub cycles: CycleArgs,
    /// Comma-separated training lengths in cycles [default: 1,2,3].
    #[arg(long, value_delimiter = ',')]
    pub train_cycles: Option<Vec<usize>>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SplitHalfArgs {
    #[command(flatten)]
    pub signal: SignalArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Features CSV with columns a, b, epsilon, label [default: bundled dataset].
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    /// Random train/test partitions [default: 100].
    #[arg(long)]
    pub partitions: Option<usize>,
    /// Training share of each partition [default: 0.8].
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Partition seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// `nll` or `eq12` [default: nll].
    #[arg(long)]
    pub objective: Option<String>,
    /// L2 penalty on non-bias weights [default: 0.01].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Optimizer iteration budget [default: 1000].
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Draw test sets without stratifying by class.
    #[arg(long)]
    pub plain_random: bool,
    /// Shuffle the labels (seeded) before evaluation.
    #[arg(long)]
    pub permute_labels: bool,
    /// Comma-separated region grids: ab, ae, be, 3d.
    #[arg(long, value_delimiter = ',')]
    pub regions: Option<Vec<String>>,
    /// Nodes per grid axis [default: 50].
    #[arg(long)]
    pub grid_steps: Option<usize>,
    /// Fix the omitted coordinate of 2-D grids at the dataset mean (default).
    #[arg(long, conflicts_with = "slice_value")]
    pub slice_at_mean: bool,
    /// Fix the omitted coordinate of 2-D grids at this value.
    #[arg(long)]
    pub slice_value: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Damping coefficient (1/s).
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    /// Stiffness coefficient (1/s^2).
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Forcing gain.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Generate from a saved sparse model instead of (a, b, eps).
    #[arg(long, value_name = "FILE", conflicts_with_all = ["a", "b", "eps"])]
    pub model: Option<PathBuf>,
    /// Seconds [default: six periods of the forcing fundamental, 4.8 s].
    #[arg(long)]
    pub duration: Option<f64>,
    /// Sample spacing in seconds [default: 0.005].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Pressure noise standard deviation [default: 0].
    #[arg(long)]
    pub noise_p: Option<f64>,
    /// Velocity noise standard deviation [default: 0].
    #[arg(long)]
    pub noise_v: Option<f64>,
    /// Noise seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Discarded lead-in, seconds [default: 10].
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Single unit sinusoid at this frequency instead of the three-harmonic forcing.
    #[arg(long)]
    pub sine_hz: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Recording to fit [default: synthetic 5 s at 200 Hz].
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "HZ|off", value_parser = parse_cutoff)]
    pub cutoff_hz: Option<Cutoff>,
    /// Comma-separated libraries to time [default: eq2,linear].
    #[arg(long, value_delimiter = ',')]
    pub libraries: Option<Vec<String>>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Timed runs [default: 7].
    #[arg(long)]
    pub runs: Option<usize>,
    /// Fits per run [default: 1000].
    #[arg(long)]
    pub iterations: Option<usize>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct DampingArgs {
    /// Features CSV [default: bundled dataset].
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_cutoff(s: &str) -> std::result::Result<Cutoff, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Runs the CLI on the process arguments and returns the exit code.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(report) => {
            // a closed stdout is not a failure once the files are written
            let _ = std::io::Write::write_all(&mut std::io::stdout(), report.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command line; returns the human-readable report.
pub fn execute(cli: Cli) -> Result<String> {
    let config = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let threads = config::pick(cli.threads, &config.threads);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        config::at_least(n, 1, "threads")?;
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::parameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::dispatch(cli.command, &config))
}
