use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

/// Marginal CDF estimation and equality testing for unordered pairs.
#[derive(Debug, Parser)]
#[command(name = "blindpair", version, about)]
pub struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true, env = "BLINDPAIR_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate min(F1, F2) and max(F1, F2) from a CSV of pairs.
    Estimate(EstimateArgs),
    /// Test H0: F1 = F2 with the symmetrized sup statistic.
    Test(TestArgs),
    /// Simulate the symmetrized pillow and print its upper quantiles.
    PillowQuantiles(PillowArgs),
    /// Run a simulation scenario.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Two-column CSV of pairs; a non-numeric first row is treated as a header.
    #[arg(long, short)]
    input: PathBuf,

    /// Field delimiter of the input CSV.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Debug, Args)]
pub struct PillowOpts {
    /// Lattice size of the pillow simulation.
    #[arg(long, default_value_t = 1000, env = "BLINDPAIR_M")]
    m: usize,

    /// Monte Carlo replicates of the pillow simulation.
    #[arg(long, default_value_t = 100_000, env = "BLINDPAIR_REPS")]
    reps: usize,

    /// Directory for cached pillow samples.
    #[arg(long, default_value = ".blindpair-cache", env = "BLINDPAIR_CACHE_DIR")]
    cache_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Output file; `-` for stdout. Default: stdout for json, `<input>.estimate.csv` for csv.
    #[arg(long, short)]
    output: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// `auto` (distinct pooled sample values) or a file with one grid point per line.
    #[arg(long, default_value = "auto")]
    grid: String,

    /// Replace g1 and g2 by their least-squares nondecreasing fits.
    #[arg(long)]
    isotonic: bool,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    input: InputArgs,

    #[command(flatten)]
    pillow: PillowOpts,

    /// Seed of the Monte Carlo streams.
    #[arg(long, default_value_t = 0, env = "BLINDPAIR_SEED")]
    seed: u64,

    /// Significance levels to report.
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = [0.1, 0.05, 0.01])]
    alphas: Vec<f64>,

    /// Output file for the JSON report; `-` for stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PillowArgs {
    #[command(flatten)]
    pillow: PillowOpts,

    /// Seed of the Monte Carlo streams.
    #[arg(long, default_value_t = 0, env = "BLINDPAIR_SEED")]
    seed: u64,

    /// Upper-tail levels to tabulate.
    #[arg(long = "alpha", value_delimiter = ',', default_values_t = [0.1, 0.05, 0.01])]
    alphas: Vec<f64>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Output file; `-` for stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// F1(x) = x against F2(x) = x^2.
    UniformSquare,
    /// Beta(4, 4) against Beta(0.25, 0.25).
    BetaBeta,
    /// Size of the test under F1 = F2 = uniform.
    H0Uniform,
    /// Uniform against a power alternative approaching it with n.
    Shrinking,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(value_enum)]
    scenario: Scenario,

    /// Pairs per sample (scenario default: 200, 2000, 500; ignored by `shrinking`).
    #[arg(long)]
    n: Option<usize>,

    /// Monte Carlo replications of the study (scenario default: 1, 1, 500, 100).
    #[arg(long)]
    reps: Option<usize>,

    /// Seed of the Monte Carlo streams.
    #[arg(long, default_value_t = 0, env = "BLINDPAIR_SEED")]
    seed: u64,

    /// Directory for CSV curve files.
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,

    /// Output file for the JSON summary; `-` for stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,

    /// Grid points on [0, 1] for the curve output.
    #[arg(long, default_value_t = 201)]
    grid_points: usize,

    /// Level of the size study.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,

    /// Lattice size of the pillow reference (h0-uniform).
    #[arg(long, default_value_t = 1000, env = "BLINDPAIR_M")]
    m: usize,

    /// Replicates of the pillow reference (h0-uniform).
    #[arg(long, default_value_t = 100_000, env = "BLINDPAIR_REPS")]
    pillow_reps: usize,

    /// Directory for cached pillow samples.
    #[arg(long, default_value = ".blindpair-cache", env = "BLINDPAIR_CACHE_DIR")]
    cache_dir: PathBuf,

    /// Scale of the shrinking alternative.
    #[arg(long, default_value_t = 1.0)]
    c: f64,

    /// Rate parameter of the shrinking alternative, in (0, 1/4].
    #[arg(long, default_value_t = 0.1)]
    delta: f64,

    /// Sample sizes of the shrinking study.
    #[arg(long, value_delimiter = ',', default_values_t = [200usize, 1000, 5000])]
    ladder: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match &cli.command {
        Command::Estimate(args) => commands::estimate(args),
        Command::Test(args) => commands::test(args),
        Command::PillowQuantiles(args) => commands::pillow_quantiles(args),
        Command::Simulate(args) => commands::simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
