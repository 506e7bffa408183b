mod commands;
mod error;
mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use commands::{CnotArgs, DetectorArgs, HomArgs, CNOT_HEADER};
use error::CliError;
use output::RunManifest;

/// Spectral/temporal simulation of beamsplitter interference and the heralded
/// linear-optics CNOT gate.
#[derive(Parser, Debug)]
#[command(name = "photonwave", version)]
struct Cli {
    /// Worker threads for sweep points and search samples (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Coincidence rate behind a balanced beamsplitter over a delay or bandwidth sweep.
    Hom(HomArgs),
    /// Worst-case CNOT fidelity and success probability over a time-shift sweep.
    Cnot(CnotArgs),
    /// Worst-case CNOT metrics over a counter bandwidth or time-window sweep.
    CnotDetector(DetectorArgs),
    /// Re-runs the command recorded in a manifest and checks the output checksum.
    Replay {
        manifest: PathBuf,
        /// Write the replayed table here instead of the recorded path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run_hom(args: &HomArgs) -> Result<RunManifest, CliError> {
    let (header, rows) = commands::hom_rows(args)?;
    commands::emit("hom", args, &args.out, &header, &rows)
}

fn run_cnot(args: &CnotArgs) -> Result<RunManifest, CliError> {
    let rows = commands::cnot_rows(args)?;
    commands::emit("cnot", args, &args.out, &CNOT_HEADER, &rows)
}

fn run_detector(args: &DetectorArgs) -> Result<RunManifest, CliError> {
    let rows = commands::detector_rows(args)?;
    commands::emit("cnot-detector", args, &args.out, &["param", "f_min", "p_min"], &rows)
}

fn params<T: DeserializeOwned>(m: &RunManifest) -> Result<T, CliError> {
    Ok(serde_json::from_value(m.parameters.clone())?)
}

fn replay(path: &PathBuf, out: Option<PathBuf>) -> Result<RunManifest, CliError> {
    let recorded = RunManifest::read(path)?;
    let fresh = match recorded.command.as_str() {
        "hom" => {
            let mut a: HomArgs = params(&recorded)?;
            a.out = out.unwrap_or(a.out);
            run_hom(&a)?
        }
        "cnot" => {
            let mut a: CnotArgs = params(&recorded)?;
            a.out = out.unwrap_or(a.out);
            run_cnot(&a)?
        }
        "cnot-detector" => {
            let mut a: DetectorArgs = params(&recorded)?;
            a.out = out.unwrap_or(a.out);
            run_detector(&a)?
        }
        other => return Err(CliError::Usage(format!("manifest records unknown command '{other}'"))),
    };
    let old: Vec<&String> = recorded.outputs.values().collect();
    let new: Vec<&String> = fresh.outputs.values().collect();
    if old != new {
        let file = fresh.outputs.keys().next().cloned().unwrap_or_default();
        return Err(CliError::Mismatch { file });
    }
    Ok(fresh)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let manifest = match cli.command {
        Command::Hom(a) => run_hom(&a)?,
        Command::Cnot(a) => run_cnot(&a)?,
        Command::CnotDetector(a) => run_detector(&a)?,
        Command::Replay { manifest, out } => {
            let m = replay(&manifest, out)?;
            eprintln!("replay matches recorded checksums");
            m
        }
    };
    for (file, sum) in &manifest.outputs {
        eprintln!("wrote {file} (sha256 {sum})");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
