//! `domino` experiment runner.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "domino",
    version,
    about = "Train and evaluate classifiers with a class-aware calibration penalty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a penalty matrix from a confusion matrix or a class hierarchy.
    #[command(group(ArgGroup::new("source").required(true).args(["from_confusion", "from_hierarchy"])))]
    Wmatrix {
        /// Confusion-matrix CSV (rows actual, columns predicted).
        #[arg(long, value_name = "CSV")]
        from_confusion: Option<PathBuf>,
        /// Hierarchy CSV with header `class,level1,...`.
        #[arg(long, value_name = "CSV")]
        from_hierarchy: Option<PathBuf>,
        /// Output W-CSV path.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Lower clamp for off-diagonal entries (confusion source only).
        #[arg(long, value_name = "REAL")]
        floor: Option<f64>,
    },
    /// Train one arm (baseline, hc or cm) as described by a config file.
    Train {
        /// Run config (`key = value` lines).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },
    /// Evaluate a saved checkpoint on one split of a configured dataset.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Run config describing the dataset and split.
        #[arg(long, value_name = "CONFIG")]
        data: PathBuf,
        /// Split to evaluate.
        #[arg(long, value_name = "SPLIT", default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
        /// Also report the mean penalty of the predictions under this W-CSV.
        #[arg(long, value_name = "PATH")]
        w: Option<PathBuf>,
        /// Report path [default: eval_<split>.json next to the checkpoint].
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Print a side-by-side table of two or more reports.
    Compare {
        /// Report JSON files (same dataset id).
        #[arg(value_name = "REPORT", num_args = 2.., required = true)]
        reports: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Wmatrix {
            from_confusion,
            from_hierarchy,
            out,
            floor,
        } => commands::wmatrix(
            from_confusion.as_deref(),
            from_hierarchy.as_deref(),
            &out,
            floor,
        ),
        Command::Train { config } => commands::train(&config),
        Command::Eval {
            checkpoint,
            data,
            split,
            w,
            out,
        } => commands::eval(&checkpoint, &data, &split, w.as_deref(), out.as_deref()),
        Command::Compare { reports } => commands::compare(&reports),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
