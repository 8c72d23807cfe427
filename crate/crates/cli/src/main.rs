//! `myosynth`: generate, preprocess, train, evaluate and predict from the
//! command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use myosynth::nn::NnError;
use myosynth::Error;
use serde::Serialize;

const ARCHS: [&str; 5] = ["rnn", "rnnseq", "fnn", "fnnseq", "cnn"];
const REGIMES: [&str; 3] = ["general", "pretrain", "subject"];
const INPUTS: [&str; 6] = ["all", "ang", "vel", "acc", "eef", "eefplus"];

#[derive(Debug, Parser)]
#[command(name = "myosynth", version, about = "Learn and generate surface-EMG envelopes from arm motion")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
enum Command {
    /// Generate a synthetic raw dataset.
    Synth,
    /// Turn a raw dataset into normalized features and EMG targets.
    Preprocess {
        raw: PathBuf,
        #[arg(long, default_value = "all", value_parser = INPUTS)]
        input: String,
    },
    /// Train one regime on a processed dataset.
    Train {
        data: PathBuf,
        #[arg(long, default_value = "rnn", value_parser = ARCHS)]
        arch: String,
        #[arg(long, default_value = "general", value_parser = REGIMES)]
        regime: String,
        /// Subject for the subject and pretrain regimes (default: the
        /// dataset's held-out subject).
        #[arg(long)]
        subject: Option<String>,
    },
    /// Fine-tune general weights on one subject.
    Finetune {
        data: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        subject: Option<String>,
    },
    /// Score weights on a split and render a table.
    Evaluate {
        data: PathBuf,
        #[arg(long, required = true)]
        weights: Vec<PathBuf>,
        /// train, val, test, new-motion or all.
        #[arg(long, default_value = "test")]
        role: String,
        #[arg(long)]
        subject: Option<String>,
        /// architectures, regimes or inputs.
        #[arg(long, default_value = "architectures")]
        layout: String,
        /// Column or row labels, one per weights file.
        #[arg(long)]
        label: Vec<String>,
    },
    /// Predict EMG for one feature CSV.
    Predict {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Feed rows one at a time through the stateful network.
        #[arg(long)]
        online: bool,
    },
    /// Evolutionary hyperparameter search.
    Tune {
        data: PathBuf,
        #[arg(long, default_value = "rnn", value_parser = ARCHS)]
        arch: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Long-format CSV of original and predicted EMG for plotting.
    Plotdata {
        #[arg(long)]
        prediction: Option<PathBuf>,
        #[arg(long)]
        target: Option<PathBuf>,
        /// Processed dataset, used with --weights and --trial.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        trial: Option<String>,
    },
}

fn is_not_found(e: &std::io::Error) -> bool {
    e.kind() == std::io::ErrorKind::NotFound
}

/// 1: invalid config or data, 2: missing artifact, 3: internal invariant.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Missing(_) => 2,
        Error::Io(io) if is_not_found(io) => 2,
        Error::Nn(NnError::Io(io)) if is_not_found(io) => 2,
        Error::Invariant(_) | Error::Nn(NnError::Shape(_)) | Error::Nn(NnError::NonFinite(_)) => 3,
        _ => 1,
    }
}

fn init_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("MYOSYNTH_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::Config(format!("MYOSYNTH_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match init_threads().and_then(|_| commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
