//! Argument structs of the subcommands.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};

use crate::error::CliError;

/// `0,1,2` or a half-open range `0..6`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("bad seed list {s:?}"));
        let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            (a..b).collect()
        } else {
            s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?
        };
        if seeds.is_empty() {
            return Err(bad());
        }
        Ok(SeedList(seeds))
    }
}

/// `train,val,test` fractions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratios(pub rrseg::corpus::SplitRatios);

impl FromStr for Ratios {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("bad ratios {s:?}; expected train,val,test"));
        let v: Vec<f64> = s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        let [train, val, test] = v[..] else {
            return Err(bad());
        };
        Ok(Ratios(rrseg::corpus::SplitRatios { train, val, test }))
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// A `.txt` file or a directory of them; the file stem is the doc id.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub domain: String,
    /// JSON array of preprocessing rules; built-in defaults otherwise.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Skip preprocessing altogether.
    #[arg(long, conflicts_with = "rules")]
    pub no_rules: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// Directory with one subdirectory per document holding `<annotator>.tsv` exports.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub domain: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AdjudicateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON `{doc_id: {sentence_index: ROLE}}` for sentences without a majority.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: Ratios,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Split each domain separately and take the union.
    #[arg(long)]
    pub by_domain: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Registered encoder name or inline spec (`hashing:128`, `handcrafted`, ...).
    #[arg(long)]
    pub encoder: String,
    /// Archive directory; defaults to a directory under the cache.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Where training documents come from.
#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Split file from `rrseg split`; without it the corpus is split per
    /// domain 80/10/10 with `--split-seed`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ShiftKind {
    Siamese,
    Pair,
}

#[derive(Debug, Args)]
pub struct TrainLspArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "siamese")]
    pub model: ShiftKind,
    /// Frozen sentence encoder (siamese) or token encoder to fine-tune (pair).
    #[arg(long)]
    pub encoder: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Loss weight of shift pairs.
    #[arg(long)]
    pub positive_weight: Option<f64>,
    /// Pair labels from the 13 fine roles instead of the main labels.
    #[arg(long)]
    pub fine: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ShiftEmbedArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub shift_model: PathBuf,
    /// Frozen encoder the siamese model was trained on.
    #[arg(long)]
    pub shift_encoder: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    #[arg(long, default_value = "bilstm_crf")]
    pub variant: String,
    /// Sentence encoder of the role component.
    #[arg(long)]
    pub encoder: String,
    /// Trained shift model directory (composed and joint variants).
    #[arg(long)]
    pub shift_model: Option<PathBuf>,
    #[arg(long)]
    pub shift_encoder: Option<String>,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Named model config from `--config`; flags below override it.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub lambda: Option<f32>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub shift_hidden: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value = "0")]
    pub seeds: SeedList,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// `start:stop:step`, a comma list or one value.
    #[arg(long, default_value = "0.1:0.9:0.1")]
    pub grid: String,
    #[arg(long, default_value = "0")]
    pub seeds: SeedList,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Run directory written by `rrseg train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Corpus to evaluate on; the training corpus by default.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub part: PartArg,
    /// Evaluate every document of `--corpus` instead of one split part.
    #[arg(long, conflicts_with = "split")]
    pub all: bool,
    /// Write predicted labels of this seed's model as JSONL.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub predictions_seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Training run holding the teacher.
    #[arg(long)]
    pub teacher_run: PathBuf,
    #[arg(long)]
    pub teacher_seed: Option<u64>,
    /// Unlabeled documents.
    #[arg(long)]
    pub unlabeled: PathBuf,
    #[arg(long)]
    pub alpha_u: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub per_iteration: Option<usize>,
    /// Student batch size in documents.
    #[arg(long, default_value_t = 16)]
    pub student_batch_size: usize,
    #[arg(long)]
    pub warm_start: bool,
    #[arg(long)]
    pub early_stop: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub it: PathBuf,
    #[arg(long)]
    pub cl: PathBuf,
    /// Corpus in the foreign schema, loaded through `--g-mapping`.
    #[arg(long)]
    pub g: Option<PathBuf>,
    /// JSON object mapping G labels to main labels or DROP.
    #[arg(long)]
    pub g_mapping: Option<PathBuf>,
    /// Comma-separated `TRAIN:TEST` cells; the config's matrix otherwise.
    #[arg(long)]
    pub cells: Option<String>,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    pub ratios: Ratios,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value = "0")]
    pub seeds: SeedList,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RrSourceArg {
    Gold,
    Predicted,
    LastK,
}

#[derive(Debug, Args)]
pub struct ExtractRrArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "gold")]
    pub source: RrSourceArg,
    /// Predictions JSONL from `rrseg evaluate --predictions`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Labels to keep.
    #[arg(long, default_value = "ROD,RPC")]
    pub labels: String,
    #[arg(long, default_value_t = 512)]
    pub k: usize,
    /// JSON `{doc_id: 0|1}` with gold outcomes.
    #[arg(long)]
    pub outcomes: Option<PathBuf>,
    /// Drop sentences that state the final decision before extracting.
    #[arg(long)]
    pub strip_decisions: bool,
    /// Only keep documents not listed in this JSON array (e.g. a previous
    /// extraction's `excluded.json`).
    #[arg(long)]
    pub exclude: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct JudgeArgs {
    #[arg(long)]
    pub inputs: PathBuf,
    /// Classifier program speaking the JSON-lines protocol.
    #[arg(long)]
    pub classifier: String,
    #[arg(long = "classifier-arg", allow_hyphen_values = true)]
    pub classifier_args: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory of runs; the global runs root by default.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
