use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use strawcast_cli::commands;
use strawcast_cli::config::PipelineConfig;
use strawcast_cli::error::{CliError, Result};
use strawcast_nn::ModelKind;

#[derive(Parser)]
#[command(name = "strawcast", version, about = "Strawberry yield and price forecasting pipeline")]
struct Cli {
    /// Pipeline config (JSON). Defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic station CSV, rasters and land mask.
    Synth,
    /// Build lag features, PCA, histograms and the train/test split.
    Preprocess,
    /// Train the named model kinds, or the default set.
    Train { kinds: Vec<ModelKind> },
    /// Write test-period forecasts for every trained model and the ensembles.
    Forecast,
    /// Score forecast files (default: the standard table) into metrics.csv.
    Evaluate { forecasts: Vec<PathBuf> },
    /// Plot forecasts against the truth and write a metrics table.
    Report,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.paths.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => print_json(&commands::cmd_synth(&cfg)?),
        Command::Preprocess => print_json(&commands::cmd_preprocess(&cfg)?),
        Command::Train { kinds } => {
            let kinds = if kinds.is_empty() { cfg.default_kinds() } else { kinds.clone() };
            print_json(&commands::cmd_train(&cfg, &kinds)?);
        }
        Command::Forecast => {
            for path in commands::cmd_forecast(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Evaluate { forecasts } => {
            let rows = commands::cmd_evaluate(&cfg, forecasts)?;
            print!("{}", commands::metrics_table(&rows));
        }
        Command::Report => {
            for path in commands::cmd_report(&cfg)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CliError::exit_code(&e) as u8)
        }
    }
}
