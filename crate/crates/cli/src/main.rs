//! `nowcast`: ingest, synthesize, analyze, train, evaluate and report.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Configuration or schema problem; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Parser, Debug)]
#[command(name = "nowcast", version, about = "GNSS precipitation nowcasting benchmark")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replace the configured seed list with this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for evaluation (capped by NOWCAST_BENCH_THREADS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Proximity temperature for the non-zero focus bias, in hours.
    #[arg(long, global = true)]
    pub tau: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Align raw PWV and gridded inputs into QC-filled hourly station CSVs.
    Ingest,
    /// Write synthetic station CSVs.
    Synth(commands::SynthArgs),
    /// Zero inflation, decay, unit-root test and correlations per station.
    Analyze,
    /// Train one model on one station and cell; writes a checkpoint.
    Train(commands::TrainArgs),
    /// Run the evaluation protocol; writes report.json.
    Evaluate,
    /// Render report.md and the long-format CSV from report.json.
    Report(commands::ReportArgs),
    /// Finite-difference check of transformer gradients.
    Gradcheck(commands::GradcheckArgs),
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(c) = cause.downcast_ref::<nowcast_core::Error>() {
            if c.is_schema_error() || matches!(c, nowcast_core::Error::InvalidConfig(_)) {
                return 2;
            }
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
