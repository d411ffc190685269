//! `binhash` command-line front end.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "binhash",
    version,
    about = "Binary hashing for feature-vector retrieval"
)]
pub struct Cli {
    /// Seed for every random step (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON object of parameter defaults; command-line flags take precedence.
    #[arg(long, global = true, value_name = "JSON")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate clustered synthetic frame features and a manifest.
    Synth(SynthArgs),
    /// Train the hashing head.
    Train(TrainArgs),
    /// Fit an unsupervised baseline hasher (lsh, pca_rr, itq, sh).
    FitBaseline(FitBaselineArgs),
    /// Encode fused video features into a packed code file.
    Encode(EncodeArgs),
    /// Top-k Hamming search of query codes against a code database.
    Search(SearchArgs),
    /// Compare methods across code lengths by mAP@k.
    Eval(EvalArgs),
    /// Measure linear-scan throughput.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub videos_per_class: Option<usize>,
    #[arg(long)]
    pub frames_per_video: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Distance between every pair of class centers.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Per-coordinate standard deviation of frame noise.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out_features: Option<PathBuf>,
    #[arg(long)]
    pub out_manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// Frame features (FVEC or CSV).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Manifest CSV: video_id,label,frame_start,frame_count.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Per-frame fusion weights applied to every video, e.g. "0.5,0.25,0.25" (default uniform).
    #[arg(long)]
    pub fusion_weights: Option<String>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct HeadArgs {
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Triplets per mini-batch.
    #[arg(long)]
    pub batch_triplets: Option<usize>,
    /// Frames sampled per triplet member.
    #[arg(long)]
    pub frames_per_sample: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub head: HeadArgs,
    #[arg(long)]
    pub bits: Option<usize>,
    /// Output model file (BHH1).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FitBaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// lsh | pca_rr | itq | sh
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub bits: Option<usize>,
    #[arg(long)]
    pub itq_iterations: Option<usize>,
    /// Output hasher file (BLH1).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model (BHH1) or hasher (BLH1) file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output code file (BHC1).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Database code file (BHC1).
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Query code file (BHC1). Alternatively pass --query-features, --query-manifest and --model.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub query_features: Option<PathBuf>,
    #[arg(long)]
    pub query_manifest: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Use this many parallel scan shards (default 1).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write results here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub head: HeadArgs,
    /// Comma-separated methods (ours, lsh, pca_rr, itq, sh).
    #[arg(long)]
    pub methods: Option<String>,
    /// Comma-separated code lengths.
    #[arg(long)]
    pub bits: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Fraction of each class held out as queries.
    #[arg(long)]
    pub query_fraction: Option<f64>,
    #[arg(long)]
    pub itq_iterations: Option<usize>,
    /// Report CSV output.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Text table output (also printed to standard output).
    #[arg(long)]
    pub out_table: Option<PathBuf>,
    /// Record wall-clock seconds per cell (makes reports non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Database size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub bits: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub queries: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn render_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn one_line(s: &str) -> String {
    s.split('\n')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" | ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            eprintln!(
                "error: usage: {}",
                one_line(text.trim_start_matches("error: "))
            );
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&render_chain(&e)));
            ExitCode::FAILURE
        }
    }
}
