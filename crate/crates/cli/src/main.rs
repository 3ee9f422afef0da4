use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hbd_cli::{exit, init_threads, run_scenario, scenarios, validate, RunOptions};

/// Hypersurface Bohm-Dirac scenario runner.
///
/// Set HBD_THREADS to fix the worker thread count.
#[derive(Parser)]
#[command(name = "hbd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        config: String,
        /// Exit nonzero when any check fails, not only on errors.
        #[arg(long)]
        strict: bool,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: out/<scenario name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List bundled scenarios.
    ListScenarios,
    /// Parse and build a scenario without running it.
    Validate { config: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit::CONFIG_ERROR as u8);
    }
    let code = match cli.command {
        Command::ListScenarios => {
            for s in scenarios::CATALOG {
                println!("{:<32} {}", s.name, s.description);
            }
            exit::OK
        }
        Command::Validate { config } => match validate(&config) {
            Ok(sc) => {
                println!("{}: ok ({} experiments)", sc.config.name, sc.config.experiments.len());
                exit::OK
            }
            Err(e) => {
                eprintln!("error: {config}: {e}");
                exit::CONFIG_ERROR
            }
        },
        Command::Run { config, strict, seed, out } => match validate(&config) {
            Err(e) => {
                eprintln!("error: {config}: {e}");
                exit::CONFIG_ERROR
            }
            Ok(sc) => match run_scenario(&sc, &RunOptions { strict, seed, out }) {
                Ok(report) => {
                    for e in report.summary["experiments"].as_array().into_iter().flatten() {
                        let verdict = match (e["status"].as_str(), e["pass"].as_bool()) {
                            (Some("ok"), Some(true)) => "pass".to_string(),
                            (Some("ok"), _) => "FAIL".to_string(),
                            _ => format!("ERROR {}", e["error"].as_str().unwrap_or("")),
                        };
                        println!("{:<40} {}", e["name"].as_str().unwrap_or("?"), verdict);
                    }
                    println!("artifacts in {}", report.out_dir.display());
                    report.exit_code(strict)
                }
                Err(e) => {
                    eprintln!("error: writing artifacts: {e}");
                    exit::EXPERIMENT_ERROR
                }
            },
        },
    };
    ExitCode::from(code as u8)
}
