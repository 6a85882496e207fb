use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use fdlm_cli::commands;
use fdlm_cli::config::RunConfig;

/// Functional state-space models on daily curves: simulate data, fit kernel
/// hyperparameters by MCMC, filter and smooth, and verify the implementation
/// against built-in oracles.
#[derive(Parser)]
#[command(name = "fdlm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic data set from a fully specified model.
    Simulate(CommonArgs),
    /// Sample the posterior of the kernel hyperparameters from a data CSV.
    Fit(CommonArgs),
    /// Run the forward filter and write per-time moments.
    Filter(CommonArgs),
    /// Run the smoother and write per-time moments (including t = 0).
    Smooth(CommonArgs),
    /// Summarize an existing posterior draws CSV.
    Summarize(CommonArgs),
    /// Run all built-in correctness checks; exit nonzero on any failure.
    Verify(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration (required for everything except verify).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override sampler.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override output.dir.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override sampler.chains (fit only).
    #[arg(long)]
    chains: Option<usize>,
    /// Force data.log_transform = true.
    #[arg(long = "log-transform")]
    log_transform: bool,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Filter(_) => "filter",
            Command::Smooth(_) => "smooth",
            Command::Summarize(_) => "summarize",
            Command::Verify(_) => "verify",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Fit(a)
            | Command::Filter(a)
            | Command::Smooth(a)
            | Command::Summarize(a)
            | Command::Verify(a) => a,
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    let args = cli.command.args();
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None if matches!(cli.command, Command::Verify(_)) => RunConfig::default(),
        None => bail!("--config is required for `{}`", cli.command.name()),
    };
    cfg.apply_overrides(
        args.seed,
        args.output.clone(),
        args.chains,
        args.log_transform,
    );

    match &cli.command {
        Command::Simulate(_) => commands::cmd_simulate(&cfg),
        Command::Fit(_) => commands::cmd_fit(&cfg),
        Command::Filter(_) => commands::cmd_filter(&cfg),
        Command::Smooth(_) => commands::cmd_smooth(&cfg),
        Command::Summarize(_) => commands::cmd_summarize(&cfg),
        Command::Verify(_) => commands::cmd_verify(&cfg),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
