//! Batch experiment runner for the UAV ruin-aware association simulator.
//!
//! Every command writes UTF-8 CSV files plus a `manifest.txt` into
//! `<out>/<command>/`. Exit status: 0 on success, 1 on invalid input, 2 when
//! the run hits an infeasible network.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uav_ruin::engine::Scheme;

#[derive(Debug, Parser)]
#[command(
    name = "uav-ruin",
    version,
    about = "Ruin-aware UAV association and power allocation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One TTI per seed and scheme: power and association tables.
    Run(Common),
    /// Whole flights for every seed and scheme, with surplus traces.
    Flight {
        #[command(flatten)]
        common: Common,
        /// Flight horizon in TTIs.
        #[arg(long, default_value_t = 100)]
        horizon: usize,
    },
    /// Per-user rate against the number of users, with and without UAVs.
    SweepUsers {
        #[command(flatten)]
        common: Common,
        /// Total user counts to sweep.
        #[arg(long, value_delimiter = ',', default_value = "25,50,75")]
        counts: Vec<usize>,
    },
    /// Analytic ruin probability against Monte-Carlo over a parameter grid.
    RuinTable {
        #[command(flatten)]
        common: Common,
        /// Monte-Carlo paths per grid point.
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
        #[arg(long, value_enum, default_value_t = Convention::PerTti)]
        convention: Convention,
        /// Mean claims per TTI under the compound-Poisson convention.
        #[arg(long, default_value_t = 1.0)]
        arrival_rate: f64,
    },
    /// Heuristic against exhaustive optimum on small networks.
    Gap {
        #[command(flatten)]
        common: Common,
        /// Numbers of base stations (2 or 3).
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        bs: Vec<usize>,
        /// eMBB user counts, e.g. `3..=8`.
        #[arg(long, default_value = "3..=8")]
        users: String,
    },
    /// Water-filling illustrations of the three power regimes.
    WaterfillDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = RegimeArg::All)]
        regime: RegimeArg,
    },
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// Scenario config (`key = value`) or record file; defaults apply when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output root; each command writes into its own subdirectory.
    #[arg(long, env = "UAV_RUIN_OUT", default_value = "out")]
    out: PathBuf,
    /// Seeds as `a..b`, `a..=b`, a single value or a comma list.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    #[arg(long, value_enum, default_value_t = SchemeArg::Both)]
    scheme: SchemeArg,
    /// Iteration cap of the association/allocation loop.
    #[arg(long)]
    tmax: Option<usize>,
    /// Convergence threshold on the largest power change, watts.
    #[arg(long)]
    eps0: Option<f64>,
    /// Extra config overrides as `key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Ruin,
    Sinr,
    Both,
}

impl SchemeArg {
    fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::Ruin => vec![Scheme::Ruin],
            SchemeArg::Sinr => vec![Scheme::Sinr],
            SchemeArg::Both => Scheme::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Convention {
    PerTti,
    CompoundPoisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Sufficient,
    Capped,
    Scarce,
    All,
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    Invalid(String),
    Infeasible(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Infeasible(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Infeasible(m) => m,
        }
    }
}

impl From<uav_ruin::Error> for Failure {
    fn from(e: uav_ruin::Error) -> Self {
        use uav_ruin::Error::*;
        match e {
            InfeasibleLink { .. }
            | ReliabilityInfeasible { .. }
            | BudgetOverdraw { .. }
            | UrllcInfeasible(_) => Failure::Infeasible(e.to_string()),
            Config(_) | Parse { .. } | Validation(_) | Domain(_) | TooLarge { .. } => {
                Failure::Invalid(e.to_string())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::execute(cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
