use std::process::ExitCode;

use clap::{Parser, Subcommand};

use shapeopt::config::RunConfig;
use shapeopt::runner;

/// Fixed-domain shape and topology optimization with Hamiltonian boundary
/// tracing.
#[derive(Parser)]
#[command(name = "shapeopt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an optimization described by a config file.
    Run {
        /// Path to a `key = value` config file.
        #[arg(long)]
        config: String,
        /// Override config entries, e.g. `--set epsilon=1e-3`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Run a bundled example (1a: translated disk, 1b: disk with a hole).
    Example {
        /// Example name: 1a or 1b.
        name: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Compare the analytic derivatives against finite differences.
    ValidateGradient {
        /// Config file naming the validation point; defaults to the
        /// near-optimal disk when omitted.
        #[arg(long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> shapeopt::Result<ExitCode> {
    match cli.command {
        Command::Run { config, set } => {
            let text = std::fs::read_to_string(&config)?;
            let mut cfg = RunConfig::parse(&text)?;
            for o in &set {
                cfg.set(o)?;
            }
            let artifacts = runner::run_config(cfg, None)?;
            print_outcome(&artifacts);
            Ok(ExitCode::SUCCESS)
        }
        Command::Example { name, set } => {
            let artifacts = runner::run_example(&name, &set)?;
            print_outcome(&artifacts);
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateGradient { config, set } => {
            let mut cfg = match config {
                Some(path) => RunConfig::parse(&std::fs::read_to_string(&path)?)?,
                None => RunConfig::validation(),
            };
            for o in &set {
                cfg.set(o)?;
            }
            let report = runner::validate_gradient(cfg)?;
            print!("{}", report.render());
            Ok(if report.all_pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
    }
}

fn print_outcome(artifacts: &runner::RunArtifacts) {
    let first = &artifacts.result.history[0];
    let last = artifacts.result.history.last().unwrap();
    println!(
        "{:?} after {} iterations: J {} -> {} (t2 {} -> {})",
        artifacts.result.status, last.k, first.j, last.j, first.t2, last.t2
    );
    if let Some(ok) = artifacts.bands_pass {
        println!("reference bands: {}", if ok { "PASS" } else { "FAIL" });
    }
    println!("artifacts in {}", artifacts.outdir.display());
}
