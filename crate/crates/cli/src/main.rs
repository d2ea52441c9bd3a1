//! `lscd`: scene search, dataset preparation, training, evaluation and
//! prediction for bitemporal landslide change detection.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod commands;
mod live;
mod region;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "lscd", version, about = "Bitemporal landslide change detection pipeline")]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search a STAC catalog for scenes around a region's event window.
    StacSearch(StacSearchArgs),
    /// Tile, filter and write sample blobs plus a manifest for one region.
    Prepare(PrepareArgs),
    /// Assign train/val/test labels in a dataset manifest.
    Split(SplitArgs),
    /// Train a model and keep the checkpoint with the lowest validation loss.
    Train(TrainArgs),
    /// Compute masked pixel metrics on a dataset split and write a CSV report.
    Evaluate(EvaluateArgs),
    /// Write the thresholded change mask of one sample as a RasterPack.
    Predict(PredictArgs),
    /// Generate a synthetic dataset whose labels depend on terrain slope.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct StacSearchArgs {
    #[arg(long)]
    region_config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Query the live endpoint over HTTP.
    #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
    live: bool,
    /// Serve responses from a canned JSON file (one page, or an array of pages).
    #[arg(long)]
    fixture: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    max_items: Option<usize>,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    region_config: PathBuf,
    /// Directory with `items.json` and per-item `<id>.rpk` / `<id>.cloud.rpk`.
    #[arg(long)]
    scenes: PathBuf,
    /// Elevation raster (RasterPack, or GeoTIFF by extension).
    #[arg(long)]
    dem: PathBuf,
    /// GeoJSON landslide inventory.
    #[arg(long)]
    inventory: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    patch_size: usize,
    #[arg(long, default_value_t = 128)]
    stride: usize,
    /// Add records to an existing manifest instead of replacing it.
    #[arg(long)]
    append: bool,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// JSON split specification.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory; defaults to `dataset_dir` in the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    report: PathBuf,
    /// Training config whose model section must match the checkpoint.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Row label in the report; defaults to the architecture name.
    #[arg(long)]
    model_name: Option<String>,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Sample blob (`.lscd`).
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 128)]
    train: usize,
    #[arg(long, default_value_t = 32)]
    val: usize,
    #[arg(long, default_value_t = 64)]
    test: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::StacSearch(a) => commands::stac_search(a),
        Command::Prepare(a) => commands::prepare(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
