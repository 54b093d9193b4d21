mod config;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{error::ErrorKind, Parser};

use config::{Command, ConfigError, RunConfig};
use run::RunError;

/// Hyperbolic sets of control systems: invariant sets, escape rates,
/// shadowing and rate-limited stabilization.
///
/// Every flag mirrors a key of the TOML config; flags override the file.
/// Exit status: 0 on success, 2 on numerical/domain errors, 3 on config
/// errors. `HYPCTRL_THREADS` caps the worker threads.
#[derive(Parser, Debug)]
#[command(name = "hypctrl", version)]
struct Cli {
    /// What to compute (may also come from the config file).
    #[arg(value_enum)]
    command: Option<Command>,

    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: RunConfig,
}

fn threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("HYPCTRL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError(format!("`HYPCTRL_THREADS`: expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError(format!("`HYPCTRL_THREADS`: {e}")))
}

fn execute(cli: Cli) -> Result<serde_json::Value, RunError> {
    threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_toml_file(path)?,
        None => RunConfig::default(),
    };
    cfg.overlay(&cli.overrides);
    if cli.command.is_some() {
        cfg.command = cli.command;
    }
    run::run(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match execute(cli) {
        Ok(summary) => {
            // a closed stdout (e.g. piped into `head`) is not an error
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&summary).unwrap());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
