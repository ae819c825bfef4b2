//! `prefixlab`: batch experiment runner.
//!
//! Every command reads an optional flat `key = value` config (`--config`),
//! applies `--set key=value` overrides, writes its outputs under `--out` and
//! records a `run-<command>.json` manifest next to them.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prefixlab::error::ErrorClass;

#[derive(Parser, Debug)]
#[command(name = "prefixlab", version, about = "Prefix value critics and prefix-first sampling on a synthetic token generator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Master seed; all outputs are a function of it and the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Collect rollouts, split by prompt and save the dataset.
    GenData(commands::GenDataArgs),
    /// Train the prefix critic on a dataset.
    TrainCritic(commands::TrainCriticArgs),
    /// Prefix probes for event count and category, with negative controls.
    Probe(commands::ProbeArgs),
    /// Run one strategy on held-out prompts.
    Sample(commands::SampleArgs),
    /// Paired comparison of two strategies with a sign test.
    Compare(commands::CompareArgs),
    /// Spread of completion scores per prefix versus spread across prefixes.
    PostfixVariance(commands::PostfixArgs),
    /// Prints the token cost of a schedule such as `32:128,288:2`.
    Budget(commands::BudgetArgs),
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Diverged => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.global.jobs {
        if j == 0 {
            eprintln!("error[config/Config]: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            eprintln!("error[config/Config]: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::GenData(a) => commands::gen_data(&cli.global, a),
        Command::TrainCritic(a) => commands::train_critic(&cli.global, a),
        Command::Probe(a) => commands::probe(&cli.global, a),
        Command::Sample(a) => commands::sample(&cli.global, a),
        Command::Compare(a) => commands::compare(&cli.global, a),
        Command::PostfixVariance(a) => commands::postfix_variance(&cli.global, a),
        Command::Budget(a) => commands::budget(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = e.class();
            let name = match class {
                ErrorClass::Config => "config",
                ErrorClass::Data => "data",
                ErrorClass::Diverged => "diverged",
            };
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{name}/{}]: {msg}", e.kind());
            ExitCode::from(exit_code(class))
        }
    }
}
