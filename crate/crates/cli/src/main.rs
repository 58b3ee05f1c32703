//! `hsacc`: synthesize data, train, evaluate and run experiment grids.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "hsacc", version, about = "Incomplete multi-view clustering experiments")]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a Gaussian-blob multi-view dataset.
    Synth(SynthArgs),
    /// Write a random availability mask.
    Mask(MaskArgs),
    /// Train a model, cluster its completed latents and write all artifacts.
    Train(RunArgs),
    /// Cluster with a trained checkpoint.
    Evaluate(EvaluateArgs),
    /// Train and score every loss-term subset in the ablation grid.
    Ablate(RunArgs),
    /// Vary one trade-off weight at a time over the sweep grid.
    Sweep(RunArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    /// Per-view feature widths.
    #[arg(long, value_delimiter = ',', default_value = "10,10")]
    pub dims: Vec<usize>,
    /// Minimum distance between cluster centers.
    #[arg(long, default_value_t = 10.0)]
    pub sep: f64,
    /// Noise standard deviation.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Sample count; taken from --data when omitted.
    #[arg(long)]
    pub n: Option<usize>,
    /// View count; taken from --data when omitted.
    #[arg(long)]
    pub views: Option<usize>,
    /// Dataset directory to size the mask from.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Fraction of samples missing at least one view, in [0, 1).
    #[arg(long)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving mask.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory (overrides data.dir).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Availability mask (overrides data.mask).
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides train.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key=value` or `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Mask(a) => commands::mask(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Ablate(a) => commands::ablate(&a),
        Command::Sweep(a) => commands::sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
