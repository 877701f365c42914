use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quadsim_core::harness::{experiment_suite, ExperimentKind, HarnessError, RunConfig};

/// Quadrotor simulation experiments with a log-map SO(3) attitude controller.
#[derive(Debug, Parser)]
#[command(name = "quadsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment and write telemetry, metrics and check results.
    Run {
        #[arg(long)]
        experiment: String,
        /// Flat `key = value` overrides applied on top of the experiment preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the error functions over [0, π].
    Sweep {
        #[arg(long, default_value = "error_sweep")]
        experiment: String,
        #[arg(long)]
        out: PathBuf,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load(experiment: &str, config: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, HarnessError> {
    let kind = ExperimentKind::parse(experiment)?;
    let mut cfg = match config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            RunConfig::from_text(kind, &text)?
        }
        None => RunConfig::preset(kind),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn execute(cfg: &RunConfig, out: &Path) -> ExitCode {
    match experiment_suite(cfg, out) {
        Ok(results) => {
            let mut stdout = std::io::stdout().lock();
            for r in &results {
                let _ = writeln!(stdout, "{r}");
            }
            if results.iter().all(|r| r.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_FAIL)
            }
        }
        Err(e @ HarnessError::BlowUp { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAIL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            experiment,
            config,
            seed,
            out,
        } => {
            let cfg = match load(&experiment, config.as_deref(), seed) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let Some(out) = out.or_else(|| cfg.out_dir.clone()) else {
                eprintln!("error: no output directory (pass --out or set out_dir in the config)");
                return ExitCode::from(EXIT_CONFIG);
            };
            execute(&cfg, &out)
        }
        Command::Sweep { experiment, out } => {
            if experiment != ExperimentKind::ErrorSweep.name() {
                eprintln!("error: sweep only supports --experiment error_sweep, got {experiment:?}");
                return ExitCode::from(EXIT_CONFIG);
            }
            execute(&RunConfig::preset(ExperimentKind::ErrorSweep), &out)
        }
    }
}
