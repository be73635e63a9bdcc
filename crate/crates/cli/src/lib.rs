//! The `qeme` command line.
//!
//! Every subcommand takes `--seed`, `--config`, `--out-dir`, and `--jobs`,
//! writes its outputs under the output directory, and finishes by writing a
//! `manifest.json` describing the run. Exit codes: 0 on success, 2 for bad
//! input data, 64 for bad usage, 1 for anything else.

mod commands;
mod manifest;
mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::contrastive_scores::{parse_contrastive_scores, render_contrastive_scores};
pub use manifest::RunManifest;

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(name = "qeme", version, about = "Quality estimation and metric meta-evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Seed for every random choice the command makes. Commands that read
    /// a seed from `--config` let this flag override it; otherwise 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for all outputs; created if missing.
    #[arg(long, default_value = "qeme-out")]
    pub out_dir: PathBuf,
    /// Worker threads. Outputs do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl Common {
    pub fn seed_or_default(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment-level τ, system-level soft pairwise accuracy, or contrastive
    /// pairwise accuracy.
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Train an estimator.
    Train(commands::train::TrainArgs),
    /// Score a corpus or a contrastive set with a trained estimator.
    Predict(commands::predict::PredictArgs),
    /// Train MLP probes on frozen representations.
    Probe(commands::probe::ProbeArgs),
    /// Source-shuffling ablation.
    Ablate(commands::ablate::AblateArgs),
    /// Collect JSON reports into tables.
    Report(commands::report::ReportArgs),
    /// Write a synthetic corpus with embeddings.
    Synth(commands::synth::SynthArgs),
}

/// A failed command: message plus process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn other(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_FAILURE,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<qeme::Error> for Failure {
    fn from(e: qeme::Error) -> Self {
        let code = match e {
            qeme::Error::NonFinite { .. } | qeme::Error::NonFiniteLoss { .. } => EXIT_FAILURE,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Parses `args` (including the program name), runs the command, and
/// returns the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("QEME_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
