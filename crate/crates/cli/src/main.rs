//! `flat`: run FLAT and baseline scenarios, generate key material and
//! compare run reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use flat_core::harness::{
    compare, emit_report, emit_run_report, run_scenario, setup_material, Attack, Format, HarnessError, Outcome,
    Protocol, RunReport, ScenarioConfig, Transport, DEFAULT_RUNS,
};

/// Exit status for a rejected configuration.
const EXIT_CONFIG: u8 = 2;
/// Exit status when an attack-free scenario has a run that was not granted.
const EXIT_UNEXPECTED_OUTCOME: u8 = 3;

#[derive(Parser)]
#[command(name = "flat", version, about = "FLAT federated authentication: scenario runner and reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and print its report.
    Run {
        #[arg(long, default_value = "flat")]
        protocol: Protocol,
        #[arg(long, default_value = "mem")]
        transport: Transport,
        /// none, replay, tamper, tamper:m1 .. tamper:m10, fake-sp or drop.
        #[arg(long, default_value = "none")]
        attack: Attack,
        #[arg(long, default_value_t = DEFAULT_RUNS)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory written by `setup`; generated from the seed if omitted.
        #[arg(long)]
        material: Option<PathBuf>,
        #[arg(long, default_value = "table")]
        report: Format,
    },
    /// Generate CA, IdP, SP and client key material as hex files.
    Setup {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare two JSON run reports (a against b).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "table")]
        report: Format,
    },
}

fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { protocol, transport, attack, runs, seed, material, report } => {
            let mut cfg = ScenarioConfig::new(protocol, transport).with_attack(attack).with_seed(seed).with_runs(runs);
            cfg.material = material;
            let metrics = run_scenario(&cfg)?;
            let unexpected = attack == Attack::None && metrics.iter().any(|m| m.outcome != Outcome::Granted);
            let rr = RunReport::new(&cfg, metrics)?;
            println!("{}", emit_run_report(&rr, report));
            if unexpected {
                eprintln!("error: a run without attack was not granted");
                return Ok(ExitCode::from(EXIT_UNEXPECTED_OUTCOME));
            }
        }
        Command::Setup { out, seed } => {
            let manifest = setup_material(&out, seed)?;
            println!("wrote material for {} entities to {}", manifest.entities.len(), out.display());
        }
        Command::Compare { a, b, report } => {
            let (a, b) = (load_report(&a)?, load_report(&b)?);
            println!("{}", emit_report(&compare(&a.runs, &b.runs)?, report));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<HarnessError>() {
                Some(HarnessError::Config(_)) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
