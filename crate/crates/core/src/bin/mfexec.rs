use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mfexec::cli::{self, Outcome, RunOptions};

#[derive(Parser)]
#[command(name = "mfexec", version, about = "Mean-field optimal liquidation: solve, simulate, verify")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid steps (simulation grid for simulate/verify/figures)
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Also write every path
    #[arg(long, global = true)]
    per_path: bool,
    /// Size of the worker pool
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Coefficient paths and well-posedness certificate
    Solve,
    /// Monte-Carlo ensemble of the optimal strategy
    Simulate,
    /// Trajectory CSVs and SVG plots for one figure
    Figures {
        #[arg(long, default_value_t = 1)]
        which: u8,
    },
    /// Full verification battery
    Verify,
    /// Discrete dynamic program and its convergence
    Oracle {
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
    },
    /// Bisection on alpha for certification and solver thresholds
    AlphaThreshold {
        #[arg(long)]
        alpha_lo: Option<f64>,
        #[arg(long)]
        alpha_hi: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = cli.common;
    let opts = RunOptions {
        config: c.config,
        seed: c.seed,
        steps: c.steps,
        paths: c.paths,
        out: c.out,
        per_path: c.per_path,
        workers: c.workers,
    };
    let run = || -> mfexec::Result<Outcome> {
        match &cli.command {
            Command::Solve => cli::cmd_solve(&opts),
            Command::Simulate => cli::cmd_simulate(&opts),
            Command::Figures { which } => cli::cmd_figures(&opts, *which),
            Command::Verify => cli::cmd_verify(&opts),
            Command::Oracle { n_list } => cli::cmd_oracle(&opts, n_list),
            Command::AlphaThreshold { alpha_lo, alpha_hi } => cli::cmd_alpha_threshold(&opts, *alpha_lo, *alpha_hi),
        }
    };
    match cli::with_workers(opts.workers, run).and_then(|r| r) {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
