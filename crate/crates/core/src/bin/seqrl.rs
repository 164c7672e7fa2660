use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seqrl::experiment::{cmd_evaluate, cmd_gen_data, cmd_pretrain, cmd_report, cmd_rl, ExperimentConfig};
use seqrl::{Error, Result};

#[derive(Parser)]
#[command(name = "seqrl", version, about = "Reward-driven fine-tuning of small seq2seq models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the in-domain, cross-domain and pretraining corpora.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Pretrain a model with cross-entropy.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
    },
    /// Fine-tune a checkpoint with the configured algorithm, once per seed.
    Rl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_delimiter = ',')]
        seed: Vec<u64>,
    },
    /// Evaluate a checkpoint at the configured beam sizes.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Consolidate run directories into tables and CSV files.
    Report {
        /// Directories written by `rl`.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    match &common.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common } => {
            let dir = cmd_gen_data(&config(&common)?, common.out.as_deref())?;
            println!("{}", dir.display());
        }
        Command::Pretrain { common, seed } => {
            if seed.len() > 1 {
                return Err(Error::Config("pretrain takes a single --seed".into()));
            }
            let ckpt = cmd_pretrain(&config(&common)?, seed.first().copied(), common.out.as_deref())?;
            println!("{}", ckpt.display());
        }
        Command::Rl {
            common,
            checkpoint,
            seed,
        } => {
            let seeds = (!seed.is_empty()).then_some(seed.as_slice());
            let summary = cmd_rl(&config(&common)?, &checkpoint, seeds, common.out.as_deref())?;
            print_json(&summary.metrics)?;
        }
        Command::Evaluate { common, checkpoint } => {
            let report = cmd_evaluate(&config(&common)?, &checkpoint, common.out.as_deref())?;
            print_json(&report)?;
        }
        Command::Report { runs, out } => {
            let report = cmd_report(&runs, &out)?;
            print!("{}", report.table);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
