use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use drawdown_core::StrategyKind;

mod commands;

use commands::CliError;

/// Minimum expected lifetime spent in drawdown: analytic solution, strategies and simulation.
///
/// Without `--params` the illustrative example market is used
/// (r=0.02, mu=0.06, sigma=0.20, kappa=0.04, lam=0.04, alpha=0.8).
/// `DRAWDOWN_THREADS` caps the number of simulation threads.
#[derive(Debug, Parser)]
#[command(name = "drawdown", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roots, free boundaries and residual diagnostics.
    Solve {
        #[command(flatten)]
        io: Io,
    },
    /// Minimum expected drawdown time psi(w, m, x).
    Value {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        state: State,
    },
    /// Dollar amount in the risky asset under a strategy.
    Policy {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        state: State,
        #[arg(long, default_value = "optimal")]
        strategy: StrategyKind,
    },
    /// Monte Carlo estimate of expected drawdown time under one strategy.
    Simulate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        state: State,
        #[command(flatten)]
        sim: Sim,
        #[arg(long, default_value = "optimal")]
        strategy: StrategyKind,
    },
    /// Several strategies on common random numbers (default: optimal, ruin, const:0, const:1).
    Compare {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        state: State,
        #[command(flatten)]
        sim: Sim,
        /// Repeat to add strategies.
        #[arg(long = "strategy")]
        strategies: Vec<StrategyKind>,
    },
    /// Numerical certification report; exits 1 if any check fails.
    Verify {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        state: State,
        #[command(flatten)]
        sim: Sim,
        /// Multiplies y_alpha by this factor before checking (test hook).
        #[arg(long, hide = true)]
        corrupt_boundaries: Option<f64>,
    },
    /// Table of psi and the four strategies per unit of m over z = w/m in (0, 1].
    Sweep {
        #[command(flatten)]
        io: Io,
        /// Number of rows, z = i/n for i = 1..=n.
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },
}

#[derive(Debug, Args)]
struct Io {
    /// JSON file with r, mu, sigma, kappa, lam, alpha.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct State {
    /// Current wealth.
    #[arg(long)]
    w: Option<f64>,
    /// Maximum wealth so far.
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    /// Time already spent in drawdown.
    #[arg(long, default_value_t = 0.0)]
    x: f64,
}

#[derive(Debug, Args)]
struct Sim {
    #[arg(long, default_value_t = 20_160_229)]
    seed: u64,
    /// Euler step in years.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Number of paths (verify: 0 skips the simulation check).
    #[arg(long)]
    paths: Option<usize>,
    /// Truncation time of the discounted estimator; default max(20/lam, 50).
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::Discounted)]
    estimator: EstimatorArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Discounted,
    Killed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::limit_threads().and_then(|()| commands::run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::VerificationFailed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
