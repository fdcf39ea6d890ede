use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgperturb_cli::commands;
use kgperturb_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "kgperturb",
    about = "Knowledge-graph perturbation toolkit",
    arg_required_else_help = true
)]
struct Cli {
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[command(rename_all = "snake_case")]
enum Command {
    /// Generate a synthetic world: graph, interactions, and QA tasks.
    GenWorld,
    /// Train the triple scorer and write its checkpoint.
    TrainScorer,
    /// Train the recommender and QA models and write their checkpoints.
    TrainDownstream,
    /// Apply one perturbation method at one scale.
    Perturb,
    /// Sweep methods over scales and chart the results.
    Curve,
    /// Train a perturbation policy, or roll one out from a checkpoint.
    RlTrain,
    /// Summarize every finished run under the output directory.
    Report,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match RunConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg.resolve(cli.seed, cli.out),
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command {
        Command::GenWorld => commands::cmd_gen_world(&cfg),
        Command::TrainScorer => commands::cmd_train_scorer(&cfg),
        Command::TrainDownstream => commands::cmd_train_downstream(&cfg),
        Command::Perturb => commands::cmd_perturb(&cfg),
        Command::Curve => commands::cmd_curve(&cfg),
        Command::RlTrain => commands::cmd_rl_train(&cfg),
        Command::Report => commands::cmd_report(&cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
