use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uidscope::features::{SpanMode, DEFAULT_SPAN_LENGTH};

mod commands;

/// Detect the author of a document from its token surprisals.
#[derive(Debug, Parser)]
#[command(name = "uidscope", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for random span sampling and synthetic corpora.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Suppress warnings and summaries.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    /// Reject documents shorter than the span length instead of padding them.
    #[arg(long, global = true)]
    pub strict_short_docs: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SpanOpts {
    #[arg(long, default_value_t = DEFAULT_SPAN_LENGTH)]
    pub span_length: usize,

    /// minmax, random or none.
    #[arg(long, default_value_t = SpanMode::MinMax)]
    pub span_mode: SpanMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Average {
    /// Unweighted mean of per-class F1.
    Unweighted,
    /// Support-weighted mean of per-class F1.
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthCorpus {
    /// Low- vs high-dispersion authors.
    Dispersion,
    /// Authors that differ only in a short bursty segment.
    Bursty,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a surprisal file into a feature file.
    Featurize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        spans: SpanOpts,
    },
    /// Train a model on a manifest split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1.0)]
        l2: f64,
        /// Gradient max-norm at which training stops.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Train on raw feature values.
        #[arg(long)]
        no_standardize: bool,
        #[command(flatten)]
        spans: SpanOpts,
    },
    /// Score a model on a manifest split.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        model: PathBuf,
        /// Report path; `.csv` writes CSV, anything else JSON. Repeatable.
        #[arg(long, required = true)]
        report_out: Vec<PathBuf>,
        /// Which average to print as the headline number.
        #[arg(long, value_enum, default_value_t = Average::Unweighted)]
        average: Average,
    },
    /// Predict the author of every document in a file.
    Predict {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Show a document's most and least uniform spans.
    Explain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        doc_id: String,
        #[arg(long, default_value_t = DEFAULT_SPAN_LENGTH)]
        span_length: usize,
        /// Write `index,token,surprisal` CSV here.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Average saved JSON reports over testbeds, each counted once.
    Combine {
        /// Report written by `evaluate`; the file stem names the testbed. Repeatable.
        #[arg(long, required = true)]
        report: Vec<PathBuf>,
        /// `.csv` writes CSV, anything else JSON.
        #[arg(long)]
        output: PathBuf,
    },
    /// Per-author UID variance distribution of a manifest split.
    Distribution {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        split: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write a synthetic train/test corpus and manifest.
    Synth {
        #[arg(long)]
        output_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = SynthCorpus::Dispersion)]
        corpus: SynthCorpus,
        #[arg(long, default_value_t = 1000)]
        train_per_author: usize,
        #[arg(long, default_value_t = 500)]
        test_per_author: usize,
    },
}

/// Joins the error chain, dropping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.ends_with(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
