use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use qcrb::cli::{self, Command, Overrides, RunConfig};
use qcrb::error::Error;

/// Attainable Cramér-Rao type bounds for pure-state models.
#[derive(Parser, Debug)]
#[command(name = "qcrb", version)]
struct Args {
    /// analyze | bound | boundary | pvm | simulate | oracle
    command: Command,
    /// JSON run config (model document plus run options)
    #[arg(long)]
    config: PathBuf,
    /// identity, sld, or a JSON file holding the weight matrix
    #[arg(long)]
    weight: Option<String>,
    /// Boundary points or simulated draws
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report (or boundary CSV) destination; standard output otherwise
    #[arg(long)]
    out: Option<PathBuf>,
    /// PVM file for `simulate`, as written by `pvm`
    #[arg(long)]
    pvm: Option<PathBuf>,
    /// Where `simulate` writes the sampled outcomes
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn write(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(args: &Args) -> Result<i32, Error> {
    let mut cfg = RunConfig::from_path(&args.config)?;
    Overrides {
        weight: args.weight.clone(),
        samples: args.samples,
        seed: args.seed,
        pvm: args.pvm.clone(),
    }
    .apply(&mut cfg)?;
    let output = cli::run(args.command, &cfg)?;
    match args.command {
        Command::Boundary => {
            write(args.out.as_deref(), output.csv.as_deref().unwrap_or_default())?;
        }
        _ => {
            if let Some(report) = &output.report {
                write(args.out.as_deref(), &cli::to_json_string(report))?;
            }
            if let (Some(path), Some(csv)) = (&args.csv, &output.csv) {
                write(Some(path), csv)?;
            }
        }
    }
    if output.disagreement {
        eprintln!(
            "{}",
            serde_json::json!({"error": "DISAGREEMENT", "message": "closed form and oracle differ", "exit_code": output.exit_code()})
        );
    }
    Ok(output.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{}", cli::error_json(&e));
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
