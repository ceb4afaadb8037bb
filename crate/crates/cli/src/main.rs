//! `distill`: run the distillation pipeline, explain its target choice,
//! benchmark it on synthetic scenes, and serve or record backends.

mod backends;
mod commands;
mod config;
mod exit;
mod input;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::bench::{self, BenchCommand};
use commands::distill::DistillArgs;
use commands::explain::ExplainArgs;
use commands::generate::GenerateArgs;
use commands::record::RecordArgs;
use commands::serve::ServeArgs;

#[derive(Debug, Parser)]
#[command(
    name = "distill",
    version,
    about = "Instruction-gated distractor removal for robot camera streams",
    after_help = "Exit codes: 0 ok, 1 failed --check or other error, 2 usage/config/input, \
                  3 backend failure, 4 target not found with --fail-closed.\n\
                  Flags also read DISTILL_<FLAG> environment variables; flags win over env, env over --config."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distill every frame of a bundle or frame directory.
    Distill(DistillArgs),
    /// Show how the target component was chosen on one frame.
    Explain(ExplainArgs),
    /// Ablation sweeps and latency measurements on synthetic scenes.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Record wire protocol exchanges into a replayable fixture.
    RecordFixture(RecordArgs),
    /// Serve the wire protocol over stdio or TCP.
    Serve(ServeArgs),
    /// Write a synthetic scene bundle.
    Generate(GenerateArgs),
}

fn configure_jobs(jobs: Option<usize>) -> anyhow::Result<()> {
    let Some(n) = jobs else { return Ok(()) };
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    #[cfg(not(feature = "parallel"))]
    log::info!("--jobs {n} ignored: built without the parallel feature");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Distill(args) => {
            let cfg = args.run.resolve()?;
            configure_jobs(cfg.jobs)?;
            commands::distill::run(&args, &cfg)
        }
        Command::Explain(args) => {
            let cfg = args.run.resolve()?;
            configure_jobs(cfg.jobs)?;
            commands::explain::run(&args, &cfg)
        }
        Command::Bench(BenchCommand::Sweep(args)) => {
            let (spec, cfg) = args.resolve()?;
            configure_jobs(cfg.jobs)?;
            bench::run_sweep_cmd(&args, &spec)
        }
        Command::Bench(BenchCommand::Latency(args)) => {
            let cfg = args.tuning.resolve()?;
            configure_jobs(cfg.jobs)?;
            bench::run_latency_cmd(&args, &cfg)
        }
        Command::RecordFixture(args) => {
            let cfg = args.run.resolve()?;
            commands::record::run(&args, &cfg)
        }
        Command::Serve(args) => {
            let cfg = args.run.resolve()?;
            configure_jobs(cfg.jobs)?;
            commands::serve::run(&args, &cfg)
        }
        Command::Generate(args) => commands::generate::run(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    exit::report(run(cli))
}
