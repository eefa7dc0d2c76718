//! `rrseg`: batch pipeline for rhetorical-role segmentation experiments.
//!
//! Every subcommand reads files and writes files; training subcommands
//! also write a `manifest.json` into a content-addressed run directory.
//! Failures exit with 2 (invalid configuration), 3 (bad data) or 4 (job
//! failure) after printing one JSON line to stderr.

mod args;
mod commands;
mod config;
mod error;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use args::*;
use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(name = "rrseg", version, about = "Rhetorical-role segmentation pipeline")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root of all run directories.
    #[arg(long, global = true, env = "RRSEG_RUNS_DIR")]
    runs_dir: Option<PathBuf>,
    /// Embedding and shift-embedding caches.
    #[arg(long, global = true, env = "RRSEG_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Maximum number of concurrent jobs (threads).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean and sentence-split raw judgment texts into a corpus.
    Ingest(IngestArgs),
    /// Merge per-annotator annotation exports into a corpus.
    Import(ImportArgs),
    /// Majority-vote gold labels from annotator labels.
    Adjudicate(AdjudicateArgs),
    /// Reduce gold roles to the seven main labels.
    Reduce(ReduceArgs),
    /// Split documents into train/val/test.
    Split(SplitArgs),
    /// Label distribution and shift statistic.
    Stats(StatsArgs),
    /// Precompute sentence embeddings into an archive.
    Encode(EncodeArgs),
    /// Train a label-shift model.
    TrainLsp(TrainLspArgs),
    /// Write shift embeddings of a corpus into an archive.
    ShiftEmbed(ShiftEmbedArgs),
    /// Train a sequence labeler over one or more seeds.
    Train(TrainArgs),
    /// Grid search over the joint model's loss weight.
    SweepLambda(SweepArgs),
    /// Label-wise evaluation of a training run.
    Evaluate(EvaluateArgs),
    /// Self-training from a trained teacher.
    Distill(DistillArgs),
    /// Cross-domain train/test matrix.
    Transfer(TransferArgs),
    /// Build judgment-prediction inputs from roles or document tails.
    ExtractRr(ExtractRrArgs),
    /// Score judgment-prediction inputs with an external classifier.
    Judge(JudgeArgs),
    /// Regenerate summary tables from run directories.
    Report(ReportArgs),
}

/// Resolved global settings shared by all subcommands.
pub struct Context {
    pub config: PipelineConfig,
    pub runs_dir: PathBuf,
    pub cache_dir: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(error::CliError::Config("--jobs must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let ctx = Context {
        runs_dir: cli
            .runs_dir
            .or_else(|| config.paths.runs_dir.clone())
            .unwrap_or_else(|| "runs".into()),
        cache_dir: cli
            .cache_dir
            .or_else(|| config.paths.cache_dir.clone())
            .unwrap_or_else(|| "cache".into()),
        config,
    };
    use commands::*;
    match cli.command {
        Command::Ingest(a) => corpus::ingest(&ctx, a),
        Command::Import(a) => corpus::import(&ctx, a),
        Command::Adjudicate(a) => corpus::adjudicate(&ctx, a),
        Command::Reduce(a) => corpus::reduce(&ctx, a),
        Command::Split(a) => corpus::split(&ctx, a),
        Command::Stats(a) => corpus::stats(&ctx, a),
        Command::Encode(a) => shift::encode(&ctx, a),
        Command::TrainLsp(a) => shift::train_lsp(&ctx, a),
        Command::ShiftEmbed(a) => shift::shift_embed(&ctx, a),
        Command::Train(a) => train::train(&ctx, a),
        Command::SweepLambda(a) => train::sweep(&ctx, a),
        Command::Evaluate(a) => train::evaluate(&ctx, a),
        Command::Distill(a) => train::distill(&ctx, a),
        Command::Transfer(a) => experiments::transfer(&ctx, a),
        Command::ExtractRr(a) => experiments::extract_rr(&ctx, a),
        Command::Judge(a) => experiments::judge(&ctx, a),
        Command::Report(a) => report::report(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", error::diagnostic(2, "config", e.to_string().trim()));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = error::classify(&e);
            eprintln!("{}", error::diagnostic(code, kind, &format!("{e:#}")));
            ExitCode::from(code)
        }
    }
}
