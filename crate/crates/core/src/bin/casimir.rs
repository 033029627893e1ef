use std::path::PathBuf;
use std::process::ExitCode;

use casimir_core::cli::{self, Command};
use casimir_core::config::{CliOverrides, RunConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "casimir", version, about = "Thermal Casimir pressure, model exclusion and Yukawa constraints")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "casimir.toml")]
    config: PathBuf,
    /// Seed for synthetic ensembles.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Confidence level of error bands.
    #[arg(long, global = true, value_parser = ["0.95", "0.99"])]
    confidence: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Unit of the optical table's first column (eV, rad/s, um).
    #[arg(long, global = true)]
    unit: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Permittivity on the imaginary axis at the Matsubara frequencies.
    Kk,
    /// Pressure against separation for each configured model.
    Pressure,
    /// Synthetic measurement ensemble and model exclusion verdicts.
    Exclusion,
    /// Yukawa constraint curve from a confidence band.
    Constraints,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let overrides = CliOverrides {
        seed: args.seed,
        confidence: args.confidence.as_deref().map(|c| c.parse().expect("validated by clap")),
        unit: args.unit,
        out: args.out,
    };
    let command = match args.command {
        Cmd::Kk => Command::Kk,
        Cmd::Pressure => Command::Pressure,
        Cmd::Exclusion => Command::Exclusion,
        Cmd::Constraints => Command::Constraints,
    };
    let result = RunConfig::load(&args.config, std::env::vars(), &overrides)
        .map_err(cli::CliError::from)
        .and_then(|cfg| cli::run(command, &cfg));
    match result {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
