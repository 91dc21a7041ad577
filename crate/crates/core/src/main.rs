use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rareloom::harness::{self, EstimatorSpec, ExperimentConfig, HarnessError, Quantity};

#[derive(Parser)]
#[command(name = "rareloom", version, about = "Rare-events source simulation and canonical estimation sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the sources and draw the samples; print occupancy and ground-truth measures.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines output (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed_offset: Option<u64>,
    },
    /// Run the full estimation pipeline and write the report rows.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines output; a CSV mirror is written next to it. Defaults to
        /// the config's `output`, else stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict to these quantities (repeatable).
        #[arg(long = "quantity")]
        quantities: Vec<Quantity>,
        /// Replace the configured estimator by `npmle` or `mindist` with defaults.
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long)]
        seed_offset: Option<u64>,
    },
    /// Summarize a report into seed-averaged errors and scaled rate columns.
    Rates {
        #[arg(long)]
        config: PathBuf,
        /// Report to read; defaults to the config's `output`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Scaling exponents (repeatable); defaults to the config's `betas`.
        #[arg(long = "beta", allow_negative_numbers = true)]
        betas: Vec<f64>,
        /// CSV output (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &Path, seed_offset: Option<u64>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if let Some(offset) = seed_offset {
        cfg.seed_offset = offset;
    }
    let origin = config.display().to_string();
    cfg.validate().map_err(|message| HarnessError::Config { path: origin, message })?;
    Ok(cfg)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), HarnessError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| HarnessError::Io { path: path.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate { config, out, seed_offset } => {
            let cfg = load(&config, seed_offset)?;
            let records = harness::simulate(&cfg)?;
            emit(out.as_ref(), &harness::simulation_jsonl(&records))
        }
        Command::Estimate { config, out, quantities, estimator, seed_offset } => {
            let mut cfg = load(&config, seed_offset)?;
            if !quantities.is_empty() {
                cfg.quantities = quantities;
            }
            if let Some(name) = estimator {
                if name != cfg.estimator.name() {
                    cfg.estimator = EstimatorSpec::from_name(&name)
                        .map_err(|message| HarnessError::Config { path: "--estimator".into(), message })?;
                }
            }
            let origin = config.display().to_string();
            cfg.validate().map_err(|message| HarnessError::Config { path: origin, message })?;
            let reports = harness::run_experiment(&cfg)?;
            match out.or_else(|| cfg.output.as_ref().map(|p| cfg.base_dir.join(p))) {
                Some(path) => harness::write_reports(&reports, &path).map(|_| ()),
                None => emit(None, &harness::to_jsonl(&reports)),
            }
        }
        Command::Rates { config, input, betas, out } => {
            let cfg = load(&config, None)?;
            let path = input
                .or_else(|| cfg.output.as_ref().map(|p| cfg.base_dir.join(p)))
                .ok_or_else(|| HarnessError::Config {
                    path: config.display().to_string(),
                    message: "no --input given and the config has no output".into(),
                })?;
            let text = std::fs::read_to_string(&path)
                .map_err(|source| HarnessError::Io { path: path.display().to_string(), source })?;
            let reports = harness::parse_jsonl(&text)?;
            let betas = if betas.is_empty() { cfg.betas.clone() } else { betas };
            let table = harness::summarize(&reports, &betas)?;
            emit(out.as_ref(), &table.to_csv())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
