//! layerlab: identity sweeps, kernel-norm reports, decomposition probes and
//! regularity-gain measurements from a JSON experiment config.

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use layerlab::lab::{run_experiment, write_outputs, ExperimentConfig};

#[derive(Parser)]
#[command(name = "layerlab", about = "boundary layer-potential experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Residuals of the tangential-derivative identities over a refinement ladder.
    VerifyIdentities {
        #[arg(long)]
        config: PathBuf,
    },
    /// Hoelder/omega_1 regularity-gain measurement for the double layer.
    MeasureGain {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sampled potential-type kernel-class norms with refinement deltas.
    KernelNorms {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fundamental-solution principal-part/remainder probe.
    DecomposeFs {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(kind: &str, config: &PathBuf) -> layerlab::Result<bool> {
    let text = std::fs::read_to_string(config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    let report = run_experiment(kind, &cfg)?;
    let path = write_outputs(&cfg, &report)?;
    for v in &report.verdicts {
        println!(
            "{} {} measured={:.6e} {} {:.6e}",
            if v.pass { "PASS" } else { "FAIL" },
            v.name,
            v.measured,
            v.comparison,
            v.tolerance
        );
    }
    println!("report: {}", path.display());
    Ok(report.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, config) = match &cli.cmd {
        Cmd::VerifyIdentities { config } => ("verify-identities", config),
        Cmd::MeasureGain { config } => ("measure-gain", config),
        Cmd::KernelNorms { config } => ("kernel-norms", config),
        Cmd::DecomposeFs { config } => ("decompose-fs", config),
    };
    match run(kind, config) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
