mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pfl_core::{EnsembleMode, PflError, Split};

#[derive(Debug, Parser)]
#[command(
    name = "pfl",
    version,
    about = "Prompt-flow anomaly detection on frozen embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic desk-scale dataset.
    Synth(SynthArgs),
    /// Train a model on the train split, validating on the val split.
    Train(TrainArgs),
    /// Predict anomaly maps and scores for one split.
    Infer(InferArgs),
    /// Compute metrics from stored predictions.
    Eval(EvalArgs),
    /// Validate and describe records, checkpoints, manifests or PGM files.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML file with generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the freshly initialised model without training.
    #[arg(long)]
    init_only: bool,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value = "image")]
    mode: EnsembleMode,
    /// Draws per distribution; defaults to the checkpoint's R_infer.
    #[arg(long)]
    samples: Option<usize>,
    /// Defaults to the checkpoint's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write each map as an 8-bit PGM.
    #[arg(long)]
    pgm: bool,
    /// Repeat inference with this many consecutive seeds and report the
    /// mean and standard deviation of every metric.
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    #[arg(long, default_value_t = pfl_core::infer_eval::metrics::DEFAULT_FPR_LIMIT)]
    fpr_limit: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Directory written by `infer`.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = pfl_core::infer_eval::metrics::DEFAULT_FPR_LIMIT)]
    fpr_limit: f64,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

fn exit_code(err: &PflError) -> u8 {
    match err {
        PflError::Config(_) | PflError::Argument(_) => 1,
        PflError::Format { .. } | PflError::Data { .. } | PflError::Io { .. } => 2,
        PflError::Numeric(_) | PflError::UndefinedMetric(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Train(a) => commands::train(&a),
        Command::Infer(a) => commands::infer(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Inspect(a) => commands::inspect(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
