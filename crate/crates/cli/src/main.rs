//! `adyn`: analysis and simulation of trait-graph adaptive dynamics.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Default output directory for commands that write files.
pub const OUTPUT_DIR_ENV: &str = "ADYN_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "adyn", version, about = "Metastable adaptive dynamics on trait graphs")]
struct Cli {
    /// Worker threads for replicate batches (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// Model JSON file.
    pub model: PathBuf,
    /// Override the mutation exponent α.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = OUTPUT_DIR_ENV, default_value = ".")]
    pub out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopMode {
    Horizon,
    Fixation,
    Esc,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model file against the structural assumptions.
    ValidateModel(ModelArgs),
    /// Enumerate ESCs, build the metastability graph and the L-scale graphs.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        /// Levels L for which to build the collapsed graph.
        #[arg(long, value_delimiter = ',')]
        levels: Vec<u32>,
        /// Explore only what is reachable from this resident set (e.g. `0` or `0,3`).
        #[arg(long)]
        from: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exit law of one ESC with per-path breakdowns.
    Rates {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        resident: String,
    },
    /// Piecewise-affine ln K dynamics of the size exponents.
    Lnk {
        #[command(flatten)]
        model: ModelArgs,
        /// Initial exponents in vertex order.
        #[arg(long, value_delimiter = ',', conflicts_with = "resident")]
        beta: Option<Vec<f64>>,
        /// Start from the profile of this ESC.
        #[arg(long)]
        resident: Option<String>,
        /// With `--resident`: start right after fixation of this mutant.
        #[arg(long, requires = "resident")]
        after_fixation: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// One exact stochastic simulation.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        k: u64,
        #[arg(long)]
        seed: Option<u64>,
        /// Start from the ESC state of this resident set.
        #[arg(long, conflicts_with = "counts")]
        resident: Option<String>,
        /// Initial counts in vertex order.
        #[arg(long, value_delimiter = ',')]
        counts: Option<Vec<u64>>,
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        #[arg(long, value_enum, default_value_t = StopMode::Horizon)]
        stop: StopMode,
        /// Target ESC for `--stop esc`.
        #[arg(long)]
        target: Option<String>,
        /// Band constant C in ε_K = C / ln K (default from the target prefactors).
        #[arg(long)]
        band_c: Option<f64>,
        /// Keep every n-th event in the trajectory.
        #[arg(long, default_value_t = 0)]
        stride: u64,
        /// Keep the state on a regular time grid.
        #[arg(long)]
        grid: Option<f64>,
        #[arg(long)]
        max_events: Option<u64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo check of the exit law (or of mutant arrivals) against the analysis.
    Montecarlo {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        resident: String,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<u64>,
        #[arg(long, default_value_t = 500)]
        replicates: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Count arrivals of this trait instead of timing the exit.
        #[arg(long)]
        arrivals: Option<String>,
        /// Horizon of each arrivals replicate.
        #[arg(long, default_value_t = 100.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.25)]
        mean_tolerance: f64,
        #[arg(long, default_value_t = 0.01)]
        ks_alpha: f64,
        #[arg(long, default_value_t = 3.0)]
        split_sigma: f64,
        /// Exit with status 2 when an acceptance verdict fails.
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Excursion law of a subcritical family: pmf table and mean births.
    Excursion {
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 10)]
        min_rows: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print the metastability graph (or an L-scale graph) as DOT or JSON.
    ExportDot {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long)]
        from: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Dot)]
        format: Format,
    },
    /// Sample the limiting jump chain between ESCs.
    JumpChain {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        from: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<commands::StatisticalFailure>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
