use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rnnf_core::timeseries::SyntheticTask;

mod commands;
mod config;

use commands::CliError;
use config::{ExperimentConfig, Overrides};

/// Recurrent network forecasting experiments.
#[derive(Parser)]
#[command(name = "rnnf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark series as CSV.
    Generate {
        #[arg(long, value_parser = parse_task)]
        task: SyntheticTask,
        #[arg(long, default_value_t = 15_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Random hyperparameter search ranked by validation NRMSE.
    Search {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        budget: Option<usize>,
        /// Continue from `trials.jsonl` in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Retrain a configuration with restarts and score it on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `best_config.json` from a search, or a bare model configuration.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Training epochs for every model; overrides the config file.
    #[arg(long)]
    epochs: Option<usize>,
}

fn parse_task(s: &str) -> Result<SyntheticTask, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("unknown task {s:?}; expected mg, narma or mso"))
}

fn load(common: &Common, budget: Option<usize>) -> Result<ExperimentConfig, CliError> {
    let o = Overrides {
        seed: common.seed,
        workers: common.workers,
        budget,
        epochs: common.epochs,
    };
    ExperimentConfig::load(&common.config, &o).map_err(CliError::Config)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { task, n, seed, out } => commands::generate(task, n, seed, &out),
        Command::Search {
            common,
            budget,
            resume,
        } => commands::search(&load(&common, budget)?, &common.out, resume),
        Command::Eval { common, model } => {
            commands::eval(&load(&common, None)?, model.as_deref(), &common.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
