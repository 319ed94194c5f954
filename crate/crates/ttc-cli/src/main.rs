//! `ttc` — run budget-allocation experiments from the command line.
//!
//! Subcommands: `run` executes a single (rule, budget, seed) cell, `sweep`
//! the whole grid; `theory` prints closed-form and Monte-Carlo budget
//! figures; `replay-check` validates a recorded JSONL log.

mod config;
mod output;
mod replay_check;
mod runner;
mod theory;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "ttc", version, about = "Allocate a generation budget across queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute exactly one (rule, avg budget, seed) cell from a config.
    Run(RunArgs),
    /// Execute the full rule × avg-budget × seed grid from a config.
    Sweep(RunArgs),
    /// Closed-form and Monte-Carlo budget figures for a difficulty profile.
    Theory(TheoryArgs),
    /// Validate a replay log and summarize its contents.
    ReplayCheck(ReplayCheckArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override the seed list with a single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the rule list with a single exploration rule.
    #[arg(long, value_name = "RULE")]
    rule: Option<String>,
    /// Override the average-budget list with a single value.
    #[arg(long = "avg-budget", value_name = "B")]
    avg_budget: Option<u64>,
    /// Generations granted per selection step.
    #[arg(long, value_name = "K")]
    k: Option<u64>,
    /// Reward threshold for elimination.
    #[arg(long)]
    gamma: Option<f64>,
    /// Exploration weight for the UCB and entropy rules.
    #[arg(long)]
    lambda: Option<f64>,
    /// Per-query generation cap: a number, "unbounded", or a preset name.
    #[arg(long = "max-samples", value_name = "CAP")]
    max_samples: Option<String>,
    /// Output directory for traces and summaries.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    /// Use the canonical grid Δ(i) = i/n with this many queries.
    #[arg(long, conflicts_with = "deltas")]
    n: Option<u64>,
    /// Explicit comma-separated per-query success probabilities.
    #[arg(long, value_delimiter = ',', value_name = "D1,D2,…")]
    deltas: Option<Vec<f64>>,
    /// Target failure probability δ for the closed-form bounds.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Monte-Carlo trials.
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Adaptive rule the Monte-Carlo trials run.
    #[arg(long, default_value = "elimination")]
    rule: String,
    /// Also write the figures as JSON to this file.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayCheckArgs {
    /// Replay log (JSONL).
    #[arg(long, value_name = "FILE")]
    log: PathBuf,
    /// Reward threshold to check correctness bits against.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Oracle slack subtracted from γ before the comparison.
    #[arg(long, default_value_t = 0.0)]
    slack: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => runner::run(args, runner::Mode::Single),
        Command::Sweep(args) => runner::run(args, runner::Mode::Grid),
        Command::Theory(args) => theory::theory(args),
        Command::ReplayCheck(args) => replay_check::replay_check(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
