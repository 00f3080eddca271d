//! `sgld`: run chains, derive schedules, verify exact kernels, probe target constants and run
//! scaling sweeps from a configuration file.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "sgld", version, about = "Stochastic gradient Langevin sampling and kernel verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run chains; writes trajectory, histogram, endpoints and a summary.
    Run(Common),
    /// Derive step size, iteration count and radii.
    Schedule(Common),
    /// Build the exact discretized kernel and run its checks.
    Kernel(Common),
    /// Probe the declared regularity constants of the target.
    Check(Common),
    /// Step-size sweep of the stationary error or of the conductance.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Replaces `sampler.seed`.
    #[arg(long)]
    seed_override: Option<u64>,
}

fn set_jobs(jobs: Option<u64>) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
    Ok(())
}

fn execute(command: Command) -> Result<commands::Outcome, CliError> {
    let (common, f): (Common, fn(&Config, &OutDir) -> Result<commands::Outcome, CliError>) = match command {
        Command::Run(c) => (c, commands::run),
        Command::Schedule(c) => (c, commands::schedule),
        Command::Kernel(c) => (c, commands::kernel),
        Command::Check(c) => (c, commands::check),
        Command::Sweep(c) => (c, commands::sweep),
    };
    set_jobs(common.jobs)?;
    let src = std::fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let mut cfg = Config::parse(&src)?;
    if let Some(seed) = common.seed_override {
        if i64::try_from(seed).is_err() {
            return Err(CliError::config(None, "--seed-override must fit in a signed 64-bit integer"));
        }
        cfg.sampler.seed = seed;
    }
    let out = OutDir::create(&common.out)?;
    out.write("config.toml", cfg.echo().as_bytes())?;
    f(&cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            if outcome.failed > 0 {
                let e = CliError::ChecksFailed(outcome.failed);
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
