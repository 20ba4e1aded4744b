//! Command-line driver: reconstruct, evaluate and dump-system.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use galvox::pipeline::{self, Config, MetricsSection};

#[derive(Parser)]
#[command(name = "galvox", about = "Watertight surface reconstruction from point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a mesh from a point cloud.
    Reconstruct {
        /// Pipeline config file (TOML). Flags override config values.
        #[arg(long)]
        config: PathBuf,
        /// Input point cloud (xyz / ply / obj); overrides `input.path`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output mesh (ply / obj); overrides `output.mesh`.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a reconstructed mesh against ground truth.
    Evaluate {
        /// Predicted mesh.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth mesh.
        #[arg(long)]
        gt: PathBuf,
        /// CSV file to append the metrics row to.
        #[arg(long)]
        out: PathBuf,
        /// Optional config for the metrics section.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assemble the Galerkin system and write it in coordinate format.
    DumpSystem {
        #[arg(long)]
        config: PathBuf,
        /// Input point cloud; overrides `input.path`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> galvox::Result<()> {
    match cli.command {
        Command::Reconstruct {
            config,
            input,
            output,
        } => {
            let config = Config::load(&config)?;
            let report =
                pipeline::reconstruct(&config, input.as_deref(), output.as_deref())?;
            print!("{}", report.to_text());
            println!("wall_time_s = {:.3}", report.wall_time_s);
        }
        Command::Evaluate {
            pred,
            gt,
            out,
            config,
        } => {
            let metrics = match config {
                Some(path) => Config::load(&path)?.metrics,
                None => MetricsSection::default(),
            };
            let report = pipeline::evaluate(&pred, &gt, &out, &metrics)?;
            println!("{}", galvox::metrics::MetricsReport::csv_header());
            println!("{}", report.csv_row());
        }
        Command::DumpSystem { config, input } => {
            let config = Config::load(&config)?;
            let path = pipeline::dump_system(&config, input.as_deref())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // surface the error chain (stage tags wrap the cause)
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
