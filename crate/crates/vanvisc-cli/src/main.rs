use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use vanvisc::harness::{converge, decay, functionals, write_output, ExperimentConfig};
use vanvisc::Error;

#[derive(Parser)]
#[command(name = "vanvisc", version, about = "Vanishing-viscosity convergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy)]
enum Kind {
    Converge,
    Functionals,
    Decay,
}

#[derive(Subcommand)]
enum Command {
    /// L1 error of the viscous solution against front tracking, per ε
    Converge(Args),
    /// Interaction functional audit over events
    Functionals(Args),
    /// Rarefaction pair-integral scaling in δ
    Decay(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Flat `key = value` configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

const EXIT_CONFIG: u8 = 1;
const EXIT_MONOTONICITY: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MonotonicityViolation { .. } => EXIT_MONOTONICITY,
        Error::Config(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

fn run(kind: Kind, config: &Path, out: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(config)?;
    let cfg = ExperimentConfig::parse(&text)?;
    match kind {
        Kind::Converge => {
            let table = converge(&cfg)?;
            write_output(out, "table.csv", &table.to_csv())?;
            let fit = serde_json::json!({
                "constant": table.constant,
                "exponent": table.exponent,
                "patching_constant": table.patching_constant,
                "ratio_spread": table.ratio_spread(),
                "hybrid_spreads": table.hybrid_spreads(),
            });
            write_output(out, "fit.json", &serde_json::to_string_pretty(&fit).expect("fit serializes"))?;
            for r in &table.rows {
                println!("eps={:e} error={:.4e} status={}", r.epsilon, r.l1_error, r.status);
            }
            if let Some(p) = table.exponent {
                println!("fitted exponent p = {p:.3}");
            }
            if table.rows.iter().any(|r| !r.is_ok()) {
                return Err(Error::BadParameter("some sweep rows failed; see table.csv".into()));
            }
        }
        Kind::Functionals => {
            let report = functionals(&cfg)?;
            write_output(out, "audit.json", &report.to_json())?;
            println!("{} runs, {} violations", report.runs.len(), report.violations);
            report.check()?;
        }
        Kind::Decay => {
            let table = decay(&cfg)?;
            write_output(out, "decay.csv", &table.to_csv())?;
            println!("{} rows", table.rows.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Converge(a) => (Kind::Converge, a),
        Command::Functionals(a) => (Kind::Functionals, a),
        Command::Decay(a) => (Kind::Decay, a),
    };
    match run(kind, &args.config, &args.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
