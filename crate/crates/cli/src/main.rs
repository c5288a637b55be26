//! `radar-fewshot`: synthesize radar datasets, train and evaluate few-shot
//! motion classifiers, and inspect range-Doppler maps.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use radar_fewshot::Error;

#[derive(Parser, Debug)]
#[command(name = "radar-fewshot", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled dataset of range-Doppler maps (or raw frames).
    Synth(SynthArgs),
    /// Turn a raw-frame dataset into a range-Doppler map dataset.
    Preprocess(PreprocessArgs),
    /// Episodic training on the training aspects.
    Train(TrainArgs),
    /// Few-shot evaluation of a checkpoint; writes result tables.
    Eval(EvalArgs),
    /// Summarize one `.rdm` file.
    Inspect(InspectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Write raw dechirped frames instead of range-Doppler maps.
    #[arg(long)]
    pub raw: bool,
    /// Comma-separated class names.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Comma-separated viewing aspects in degrees.
    #[arg(long, value_delimiter = ',')]
    pub aspects: Option<Vec<f64>>,
    /// Frames per recording.
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub noiseless: bool,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Raw-frame dataset directory.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricArg {
    Knn,
    Proto,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Dataset directory produced by `synth` or `preprocess`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Queries per episode.
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Episodes per epoch.
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Train without the channel attention block.
    #[arg(long)]
    pub no_se: bool,
    /// Continue from `<out>/ckpt/last.ckpt`.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Checkpoint file; without it an untrained model is evaluated.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Comma-separated shot counts, one result row each.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    /// Also evaluate with the attention weights forced to one and print
    /// the accuracy difference.
    #[arg(long)]
    pub ablate: bool,
    /// `test` or `train`.
    #[arg(long)]
    pub split: Option<String>,
    /// Per-scenario breakdown: `subject` or `distance`.
    #[arg(long)]
    pub scenario: Option<String>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// The `.rdm` file.
    pub file: PathBuf,
    /// Also render the map to this PNG.
    #[arg(long)]
    pub png: Option<PathBuf>,
    /// Run configuration supplying the radar parameters for physical units.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Format { .. }
        | Error::Io { .. }
        | Error::InsufficientSamples { .. }
        | Error::DegenerateInput(_)
        | Error::Dimension { .. }
        | Error::Label { .. } => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Preprocess(a) => commands::preprocess(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
