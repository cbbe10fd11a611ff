//! `qdsearch`: run quality-diversity searches from flat config files and
//! export archives, stats, heatmaps, and replayable manifests.
//!
//! Parallelism is controlled by the `RAYON_NUM_THREADS` environment variable
//! only; results are identical for any thread count.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "qdsearch", version, about = "Quality-diversity search runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts to an output directory.
    Run {
        /// Experiment config file (flat `key = value` format).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: ./qd-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override any config key, e.g. --override budget=100 (repeatable).
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Continue a checkpointed search to its budget.
    Resume {
        /// Path to a checkpoint JSON written by `run`.
        checkpoint: PathBuf,
        /// Output directory (default: the checkpoint's run directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configs with paired seeds and print a comparison table.
    Compare {
        /// Config files to compare (repeatable, at least one).
        #[arg(long = "config", required = true)]
        configs: Vec<PathBuf>,
        /// Shared seed applied to every config.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for compare.csv (optional; table always prints).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an archive CSV as a PGM heatmap (2D archives only).
    Heatmap {
        /// archive.csv produced by `run`, with its manifest alongside.
        #[arg(long)]
        archive: PathBuf,
        /// Output image path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out, overrides } => {
            commands::cmd_run(&config, &overrides, seed, out)
        }
        Command::Resume { checkpoint, out } => commands::cmd_resume(&checkpoint, out),
        Command::Compare { configs, seed, out } => commands::cmd_compare(&configs, seed, out),
        Command::Heatmap { archive, out } => commands::cmd_heatmap(&archive, &out),
    }
}
