//! `colorcascade` command-line tool.
//!
//! Exit codes: 0 success, 2 input error, 3 numeric failure, 4 configuration
//! mismatch.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod bench;
mod classify;
mod errors;
mod evaluate;
mod gen;
mod models;
mod train;

use errors::exit_code;

#[derive(Parser)]
#[command(
    name = "colorcascade",
    version,
    about = "Verification cascades of small color and grayscale classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one stage model on a `pos/` + `neg/` directory of PPM/PGM files.
    Train(TrainArgs),
    /// Run a cascade over the frames of a manifest.
    Classify(ClassifyArgs),
    /// Score detected events against ground-truth intervals.
    Evaluate(EvaluateArgs),
    /// Render synthetic scenes: a labeled image set or a timeline video.
    Gen(GenArgs),
    /// Time each cascade stage and the cascade end to end.
    Bench(BenchArgs),
    /// Parameter counts of the color and grayscale models.
    Params(ParamsArgs),
}

#[derive(Args, Debug, serde::Serialize)]
pub struct TrainArgs {
    /// Channel projection the model sees: identity_rgb (or rgb), grayscale (or
    /// gray), pair_rg, pair_gb, pair_br, single_r, single_g, single_b.
    #[arg(long, default_value = "identity_rgb")]
    pub class_channels: String,
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Weight file to write; the network spec goes to `<out>.spec.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Square input side. Images of another size are resized.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// `desk` (small) or `full` (the full-width model).
    #[arg(long, default_value = "desk")]
    pub arch: String,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct ClassifyArgs {
    /// Cascade manifest: one `projection=.. weights=.. threshold=..` line per stage.
    #[arg(long)]
    pub cascade: PathBuf,
    /// Frame manifest: optional `fps=`/`stride=` headers, then one path per line.
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long, value_parser = ["image", "video"], default_value = "image")]
    pub mode: String,
    #[arg(long)]
    pub report: PathBuf,
    /// Per-frame track CSV in video mode. Defaults to `<report>.tracks.csv`.
    #[arg(long)]
    pub track_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub radius: usize,
    /// Run later stages only near frames that can still be confirmed.
    #[arg(long)]
    pub lazy: bool,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct EvaluateArgs {
    /// Events JSON (a classify report or a bare event array). Repeat together
    /// with --truth for a multi-video corpus.
    #[arg(long, required = true)]
    pub events: Vec<PathBuf>,
    /// Truth CSV with header `start_s,end_s,label`, paired with --events in order.
    #[arg(long, required = true)]
    pub truth: Vec<PathBuf>,
    #[arg(long, default_value_t = colorcascade::evalkit::DEFAULT_TOLERANCE_S)]
    pub tolerance: f64,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct GenArgs {
    /// Video timeline, e.g. `plain:2,explosion:1,plain:2` (seconds).
    #[arg(long, conflicts_with_all = ["per_class", "classes"])]
    pub timeline: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub fps: f64,
    /// Images per class for a labeled `pos/` + `neg/` set.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Classes of the labeled set.
    #[arg(long, value_delimiter = ',', default_value = "explosion,plain")]
    pub classes: Vec<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = colorcascade::synthcorpus::DEFAULT_SIZE)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub cascade: PathBuf,
    /// Frames to time. Without it a synthetic stream is generated.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Length of the generated stream.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Share of explosion frames in the generated stream; the rest are plain.
    #[arg(long, default_value_t = 0.0)]
    pub positive_rate: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = colorcascade::synthcorpus::DEFAULT_SIZE)]
    pub size: usize,
    #[arg(long, default_value_t = colorcascade::bench::MIN_WARMUP)]
    pub warmup: usize,
    #[arg(long, default_value_t = colorcascade::bench::MIN_REPETITIONS)]
    pub repetitions: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Raw per-repetition timings.
    #[arg(long)]
    pub raw_csv: Option<PathBuf>,
}

#[derive(Args, Debug, serde::Serialize)]
pub struct ParamsArgs {
    #[arg(long, default_value = "full")]
    pub arch: String,
    #[arg(long, default_value_t = 300)]
    pub size: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train::run(&a),
        Command::Classify(a) => classify::run(&a),
        Command::Evaluate(a) => evaluate::run(&a),
        Command::Gen(a) => gen::run(&a),
        Command::Bench(a) => bench::run(&a),
        Command::Params(a) => bench::params(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
