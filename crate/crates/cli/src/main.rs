//! `oscisel`: derive schedules, run budgeted training, probe the curvature
//! term and aggregate run directories.
//!
//! Exit status: 0 on success, 1 on usage errors (bad flags, missing or
//! invalid config), 2 on runtime errors.

mod commands;
mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "oscisel", version, about = "Oscillatory data-volume scheduling for selected-data training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the schedule parameters for a target ratio.
    Derive {
        #[arg(long)]
        target_ratio: f64,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        /// Also print the per-epoch ratios for this many epochs.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train from a config and write metrics.jsonl and summary.json.
    Run(RunArgs),
    /// Estimate R(p, θ_t) at probed epochs of a training run.
    Probe {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated ratios; the schedule's own p_t when omitted.
        #[arg(long, value_delimiter = ',')]
        p: Vec<f64>,
        /// Comma-separated epochs to probe; every epoch when omitted.
        #[arg(long, value_delimiter = ',')]
        at: Vec<usize>,
    },
    /// Monte-Carlo check of the one-step expansion at initialization.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Generate a synthetic dataset as train.osds and test.osds.
    GenData(GenArgs),
    /// Aggregate run directories into a CSV table.
    Report {
        /// Run directory or a directory containing run directories.
        #[arg(long = "in", required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out`, then
    /// `$OSCISEL_OUT/<name>`, then `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GenKind {
    TwoMoons,
    Blobs,
    Linear,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Training samples (blobs: per class, before the split).
    #[arg(long)]
    n_train: usize,
    #[arg(long)]
    n_test: usize,
    /// Input noise (two-moons, linear) or cluster spread (blobs).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 2)]
    d_in: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Marks errors that map to exit status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Derive {
            target_ratio,
            epsilon,
            epochs,
        } => commands::derive(target_ratio, epsilon, epochs),
        Command::Run(args) => commands::run(&args.config, args.out.as_deref()),
        Command::Probe { run, p, at } => commands::probe(&run.config, run.out.as_deref(), &p, &at),
        Command::Verify { run, p, trials } => {
            commands::verify(&run.config, run.out.as_deref(), &p, trials)
        }
        Command::GenData(args) => commands::gen_data(&args),
        Command::Report { inputs } => report::report(&inputs),
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
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
