//! Subcommand implementations and the helpers they share.

pub mod corpus;
pub mod experiments;
pub mod report;
pub mod shift;
pub mod train;

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Serialize;

use rrseg::corpus::{load_corpus, split_by_domain, CorpusSplit, DocumentRecord, Part, SplitRatios};
use rrseg::experiments::{content_dir, RunManifest};
use rrseg::labelers::{SequenceModelConfig, Variant};

use crate::args::{DataArgs, HyperArgs, PartArg};
use crate::error::CliError;
use crate::inputs::InputBuilder;
use crate::Context;

/// A loaded corpus with its split, remembering where both came from.
pub struct Data {
    pub corpus_path: PathBuf,
    pub docs: Vec<DocumentRecord>,
    pub split: CorpusSplit,
    pub split_path: Option<PathBuf>,
}

impl Data {
    pub fn load(ctx: &Context, args: &DataArgs) -> Result<Self> {
        let corpus_path = args
            .corpus
            .clone()
            .or_else(|| ctx.config.paths.corpus.clone())
            .ok_or_else(|| CliError::Config("no corpus: pass --corpus or set paths.corpus".into()))?;
        let docs = load_corpus(&corpus_path)?;
        let split_path = args.split.clone().or_else(|| ctx.config.paths.split.clone());
        let split = match &split_path {
            Some(p) => rrseg::util::read_json(p)?,
            None => split_by_domain(&docs, SplitRatios::default(), args.split_seed)?,
        };
        Ok(Self {
            corpus_path,
            docs,
            split,
            split_path,
        })
    }

    pub fn part(&self, part: Part) -> Vec<DocumentRecord> {
        self.split.select(&self.docs, part).into_iter().cloned().collect()
    }

    /// Records the corpus and split in a manifest.
    pub fn describe(&self, manifest: &mut RunManifest) -> Result<()> {
        manifest.add_input(&self.corpus_path)?;
        if let Some(p) = &self.split_path {
            manifest.add_input(p)?;
        }
        manifest.split_seed = Some(self.split.seed);
        Ok(())
    }
}

pub fn part(arg: PartArg) -> Part {
    match arg {
        PartArg::Train => Part::Train,
        PartArg::Val => Part::Val,
        PartArg::Test => Part::Test,
    }
}

/// The labeler config: variant defaults (or a named config), sized to the
/// inputs, with command-line overrides applied.
pub fn model_config(ctx: &Context, hyper: &HyperArgs, builder: &InputBuilder) -> Result<SequenceModelConfig> {
    let variant = builder.recipe().variant;
    let mut c = match &hyper.model {
        Some(name) => {
            let c = ctx.config.model(name)?;
            if c.variant != variant {
                return Err(CliError::Config(format!(
                    "model {name:?} is a {} config but --variant is {}",
                    c.variant.name(),
                    variant.name()
                ))
                .into());
            }
            c
        }
        None => match variant {
            Variant::Crf => SequenceModelConfig::crf(builder.rr_dim()),
            Variant::Bilstm => SequenceModelConfig::bilstm(builder.rr_dim()),
            Variant::BilstmCrf => SequenceModelConfig::bilstm_crf(builder.rr_dim()),
            Variant::LspBilstmCrf => SequenceModelConfig::lsp_bilstm_crf(builder.rr_dim()),
            Variant::Mtl => SequenceModelConfig::mtl(builder.shift_dim().unwrap_or(1), builder.rr_dim(), 0.6),
        },
    };
    c.input_dim = builder.rr_dim();
    c.shift_input_dim = builder.shift_dim();
    if c.shift_embedding_dim.is_none() {
        c.shift_embedding_dim = builder.shift_embedding_dim();
    }
    if let Some(v) = hyper.lambda {
        c.lambda = v;
    }
    if let Some(v) = hyper.epochs {
        c.epochs = v;
    }
    if let Some(v) = hyper.lr {
        c.learning_rate = v;
    }
    if let Some(v) = hyper.batch_size {
        c.batch_size = v;
    }
    if hyper.hidden.is_some() {
        c.hidden = hyper.hidden;
    }
    if hyper.shift_hidden.is_some() {
        c.shift_hidden = hyper.shift_hidden;
    }
    if hyper.patience.is_some() {
        c.patience = hyper.patience;
    }
    c.validate()?;
    Ok(c)
}

/// The run directory: `--out` when given, else content-addressed under
/// the runs root. The manifest is written immediately.
pub fn open_run(ctx: &Context, out: Option<&Path>, manifest: &RunManifest) -> Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => content_dir(&ctx.runs_dir, manifest),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    manifest.write(&dir)?;
    Ok(dir)
}

/// Adds output names to the manifest and rewrites it.
pub fn close_run(dir: &Path, manifest: &mut RunManifest, outputs: &[&str]) -> Result<()> {
    manifest.outputs.extend(outputs.iter().map(|s| s.to_string()));
    manifest.write(dir)?;
    Ok(())
}

pub fn write_csv<S: AsRef<str>>(path: &Path, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}
