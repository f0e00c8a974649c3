use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "qgaze", version, about = "Quantum-circuit GAN and KDE Markov baseline for gaze velocities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Gaze CSV -> velocity, scaled and discretized series.
    Ingest(IngestArgs),
    /// Train one generator per (qubits, layers) grid point.
    TrainQgan(TrainArgs),
    /// Fit the KDE transition matrix and sample a series from it.
    FitMarkov(MarkovArgs),
    /// Sample from a trained checkpoint or a transition matrix.
    Generate(GenerateArgs),
    /// Moment, JSD and histogram reports.
    Evaluate(EvaluateArgs),
}

/// Options shared by every command; each overrides the config file.
#[derive(Args, Clone, Default)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Gaze CSV with header `t,x_left,y_left,x_right,y_right`.
    pub input: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Mean-resampling window in seconds.
    #[arg(long)]
    pub resample_interval: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Levels of the discrete series file (a power of two).
    #[arg(long)]
    pub levels: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Scaled series (`index,value`), e.g. `scaled.csv` from ingest.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Qubit counts: `3`, `3,4` or `3..4`.
    #[arg(long)]
    pub qubits: Option<String>,
    /// Layer counts: `1`, `1,2` or `1..5`.
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Sequence length for the LSTM discriminator.
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long, value_parser = ["mlp", "lstm"])]
    pub disc_arch: Option<String>,
    #[arg(long)]
    pub penalty_weight: Option<f64>,
    /// Write real elapsed seconds in the log instead of 0.
    #[arg(long)]
    pub record_time: bool,
}

#[derive(Args)]
pub struct MarkovArgs {
    /// Scaled single-eye series, e.g. `scaled_left.csv`.
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub states: Option<usize>,
    /// Length of the generated series.
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint (or run directory) written by train-qgan.
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    pub checkpoint: Option<PathBuf>,
    /// Transition matrix written by fit-markov.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Start state for Markov generation.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Reference scaled series.
    #[arg(long)]
    pub real: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Run directories (or checkpoint files) from train-qgan.
    #[arg(long, num_args = 1..)]
    pub qgan: Vec<PathBuf>,
    /// Generated Markov series (`index,value`).
    #[arg(long)]
    pub markov: Option<PathBuf>,
    /// Further `index,value` series to compare, reported under their file stem.
    #[arg(long, num_args = 1..)]
    pub series: Vec<PathBuf>,
    /// Shared discrete support for the JSD table.
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub hist_bins: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(&a),
        Command::TrainQgan(a) => commands::train_qgan(&a),
        Command::FitMarkov(a) => commands::fit_markov(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
