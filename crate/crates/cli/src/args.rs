//! Command-line surface. Every value flag may also come from `--config`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "llfl", version, about = "Lifelong fact learning runs")]
pub struct Cli {
    /// Flat `key = value` file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted-cluster benchmark to disk.
    Synth(SynthArgs),
    /// Divide facts into tasks.
    Split(SplitArgs),
    /// Train a method over the task sequence, one checkpoint per task.
    Train(TrainArgs),
    /// Score every checkpoint and write the accuracy report.
    Eval(EvalArgs),
    /// Slice a report into long-tail, few-shot, fact-type and compositional views.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args, Default)]
pub struct DataArgs {
    /// Facts TSV: id, subject, predicate, object (`*` for an undefined slot).
    #[arg(long)]
    pub facts: Option<PathBuf>,
    /// Word vectors: a `count dim` header then `token v1 .. vd` lines.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Examples CSV: example_id, fact_id, split, features.
    #[arg(long)]
    pub examples: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub facts_per_cluster: Option<usize>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub train_per_fact: Option<usize>,
    #[arg(long)]
    pub test_per_fact: Option<usize>,
    #[arg(long)]
    pub cluster_signal: Option<f64>,
    /// Cycle per-fact training counts to produce a long tail.
    #[arg(long)]
    pub long_tail: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// `semantic` or `random`.
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: Option<u64>,
    /// Random split only: candidates drawn before keeping the most balanced.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Continue an interrupted run: at task N, or after the last complete checkpoint.
    #[arg(long, num_args = 0..=1, value_name = "TASK")]
    pub resume: Option<Option<usize>>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Directory written by `train`.
    #[arg(long)]
    pub checkpoints: Option<PathBuf>,
    /// Comma-separated cutoffs, default 1,5,10.
    #[arg(long)]
    pub topk: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub benchmark: Option<PathBuf>,
    /// Directory written by `eval`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Comma-separated cutoffs; defaults to those in the report.
    #[arg(long)]
    pub topk: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
