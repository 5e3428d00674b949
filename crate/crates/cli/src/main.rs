use std::path::PathBuf;
use std::process::ExitCode;

use anyon_mf::{execute, Suite};
use clap::Parser;

/// Run one experiment suite of the anyon average-field laboratory.
#[derive(Debug, Parser)]
#[command(name = "anyon-mf", version)]
struct Args {
    /// Suite to run.
    #[arg(value_enum)]
    suite: Suite,
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: runs/<timestamp>).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args.suite, &args.config, args.seed, args.out) {
        Ok((manifest, dir)) => {
            for check in manifest.all_checks() {
                println!("{:7} {}: {}", check.status.label(), check.name, check.detail);
            }
            println!("results in {}", dir.display());
            ExitCode::from(manifest.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("anyon-mf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
