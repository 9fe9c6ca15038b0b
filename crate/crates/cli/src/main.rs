//! `sra <experiment> --config <file> [--seed N] [--out DIR] [--threads K]`
//!
//! Exit codes: 0 success, 1 assertion failure inside an assertion-bearing
//! experiment, 2 config or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sra_cli::{commands, config, CommandOutcome, RunContext, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "sra", version, about = "Self-rewarding alignment laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the self-rewarding loop and emit trajectory + theory curves.
    Iterate(CommonArgs),
    /// Failure-rate sweep over the adversarial instance family.
    HardInstance(CommonArgs),
    /// Build and verify greedy-decoding traps over a parameter grid.
    Trap(CommonArgs),
    /// Effective-dimension curves and regime-bound dominance.
    Spectral(CommonArgs),
    /// Evaluate the recurrence constants and envelopes directly.
    Dynamics(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (flag beats SRA_OUT beats config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel sweeps (0 = library default).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args): (&'static str, &CommonArgs) = match &cli.command {
        Command::Iterate(a) => ("iterate", a),
        Command::HardInstance(a) => ("hard-instance", a),
        Command::Trap(a) => ("trap", a),
        Command::Spectral(a) => ("spectral", a),
        Command::Dynamics(a) => ("dynamics", a),
    };
    match dispatch(name, args) {
        Ok(outcome) => {
            if outcome.assertions_failed {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(name: &'static str, args: &CommonArgs) -> anyhow::Result<CommandOutcome> {
    let run = move || -> anyhow::Result<CommandOutcome> {
        match name {
            "iterate" => {
                let (cfg, echo) = config::load::<config::IterateConfig>(&args.config)?;
                let ctx = context(name, args, &cfg.common, echo);
                commands::run_iterate(&cfg, &ctx)
            }
            "hard-instance" => {
                let (cfg, echo) = config::load::<config::HardInstanceConfig>(&args.config)?;
                let ctx = context(name, args, &cfg.common, echo);
                commands::run_hard_instance(&cfg, &ctx)
            }
            "trap" => {
                let (cfg, echo) = config::load::<config::TrapConfig>(&args.config)?;
                let ctx = context(name, args, &cfg.common, echo);
                commands::run_trap(&cfg, &ctx)
            }
            "spectral" => {
                let (cfg, echo) = config::load::<config::SpectralConfig>(&args.config)?;
                let ctx = context(name, args, &cfg.common, echo);
                commands::run_spectral(&cfg, &ctx)
            }
            "dynamics" => {
                let (cfg, echo) = config::load::<config::DynamicsConfig>(&args.config)?;
                let ctx = context(name, args, &cfg.common, echo);
                commands::run_dynamics(&cfg, &ctx)
            }
            _ => unreachable!("subcommands are exhaustive"),
        }
    };

    match args.threads {
        Some(k) if k > 0 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build()?;
            pool.install(run)
        }
        _ => run(),
    }
}

fn context(
    command: &'static str,
    args: &CommonArgs,
    common: &config::CommonKeys,
    config_echo: serde_json::Value,
) -> RunContext {
    let out_dir = args
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| common.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("sra-out").join(command));
    RunContext {
        command,
        seed: args.seed.or(common.seed).unwrap_or(0),
        out_dir,
        config_echo,
    }
}
