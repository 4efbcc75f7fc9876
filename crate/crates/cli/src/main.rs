use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use meanflow::commands::{self, EXIT_CONFIG, EXIT_OK, EXIT_VERIFY};
use meanflow::verify::{self, VerifyOptions};
use meanflow::{parse_config, ExperimentConfig};
use meanflow_core::fieldexpr::FieldExpr;

/// Mean field equation and gradient flow laboratory.
#[derive(Parser)]
#[command(name = "meanflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the gradient flow; writes series.csv, snapshots/ and report.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the stationary equation by Newton continuation.
    Stationary {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check operator and flow invariants at the configured resolution.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Scale one quadrature weight (`NODE:FACTOR`) to exercise failure reporting.
        #[arg(long, hide = true, value_parser = parse_corruption)]
        corrupt_weight: Option<(usize, f64)>,
    },
    /// Run one flow per rho value; writes sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated list; constant expressions such as `4*pi` are allowed.
        #[arg(long, allow_hyphen_values = true)]
        rho: String,
    },
}

fn parse_corruption(text: &str) -> Result<(usize, f64), String> {
    let (node, factor) = text
        .split_once(':')
        .ok_or_else(|| "expected NODE:FACTOR".to_string())?;
    let node = node.parse().map_err(|_| format!("bad node `{node}`"))?;
    let factor = factor.parse().map_err(|_| format!("bad factor `{factor}`"))?;
    Ok((node, factor))
}

fn parse_rho_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let expr: FieldExpr = item.parse().map_err(|e| format!("`{item}`: {e}"))?;
            if !expr.is_constant() {
                return Err(format!("`{item}` is not a constant"));
            }
            expr.eval_constant().map_err(|e| format!("`{item}`: {e}"))
        })
        .collect()
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, i32> {
    parse_config(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        EXIT_CONFIG
    })
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config } => match load(&config) {
            Ok(cfg) => commands::cmd_run(&cfg),
            Err(code) => code,
        },
        Command::Stationary { config } => match load(&config) {
            Ok(cfg) => commands::cmd_stationary(&cfg),
            Err(code) => code,
        },
        Command::Verify {
            config,
            corrupt_weight,
        } => {
            let cfg = match load(&config) {
                Ok(cfg) => cfg,
                Err(code) => return code,
            };
            let checks = verify::run_checks(&cfg, VerifyOptions { corrupt_weight });
            print!("{}", verify::render_table(&checks));
            match checks.iter().find(|c| !c.passed()) {
                None => EXIT_OK,
                Some(bad) => {
                    eprintln!("failed check: {}", bad.name);
                    EXIT_VERIFY
                }
            }
        }
        Command::Sweep { config, rho } => {
            let rhos = match parse_rho_list(&rho) {
                Ok(list) if !list.is_empty() => list,
                Ok(_) => Cli::command()
                    .error(clap::error::ErrorKind::InvalidValue, "--rho needs at least one value")
                    .exit(),
                Err(e) => Cli::command()
                    .error(clap::error::ErrorKind::InvalidValue, e)
                    .exit(),
            };
            match load(&config) {
                Ok(cfg) => commands::cmd_sweep(&cfg, &rhos),
                Err(code) => code,
            }
        }
    }
}

fn main() -> ExitCode {
    let code = dispatch(Cli::parse());
    ExitCode::from(code as u8)
}
