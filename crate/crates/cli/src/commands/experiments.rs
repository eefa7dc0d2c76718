use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use rayon::prelude::*;

use rrseg::corpus::{load_corpus, load_foreign_corpus, split_corpus, DocumentRecord, Domain, LabelMapping, MainLabel, SplitRatios};
use rrseg::experiments::{
    extract_rr_for_judgment, judgment_eval, last_k_tokens, run_transfer, DecisionFilter, DomainSplit,
    JudgmentInput, JudgmentOutcome, ProcessClassifier, RrSource, RunManifest, SeedSummary, TransferData,
    TransferDomain, TransferModel, TransferRun,
};
use rrseg::labelers::{evaluate as evaluate_model, read_predictions, train_sequence_labeler, SequenceModel, TrainExample};
use rrseg::metrics::domain_transfer_delta;

use super::{close_run, fmt_opt, model_config, open_run, print_json, write_csv};
use crate::args::{ExtractRrArgs, JudgeArgs, RrSourceArg, TransferArgs};
use crate::commands::train::recipe;
use crate::error::CliError;
use crate::inputs::InputBuilder;
use crate::Context;

fn split_docs(docs: &[DocumentRecord], ratios: SplitRatios, seed: u64) -> Result<DomainSplit> {
    let split = split_corpus(docs, ratios, seed)?;
    let pick = |part| split.select(docs, part).into_iter().cloned().collect();
    Ok(DomainSplit {
        train: pick(rrseg::corpus::Part::Train),
        val: pick(rrseg::corpus::Part::Val),
        test: pick(rrseg::corpus::Part::Test),
    })
}

/// A trained labeler scored through precomputed examples.
struct Labeler<'a> {
    model: SequenceModel,
    examples: &'a BTreeMap<String, TrainExample>,
}

fn lookup(examples: &BTreeMap<String, TrainExample>, docs: &[DocumentRecord]) -> Vec<TrainExample> {
    docs.iter().map(|d| examples[&d.doc_id].clone()).collect()
}

impl TransferModel for Labeler<'_> {
    fn macro_f1(&self, test: &[DocumentRecord]) -> rrseg::Result<f64> {
        Ok(evaluate_model(&self.model, &lookup(self.examples, test))?.macro_f1)
    }
}

pub fn transfer(ctx: &Context, a: TransferArgs) -> Result<()> {
    let section = ctx.config.transfer.clone().unwrap_or_default();
    let cells: Vec<(TransferDomain, TransferDomain)> = match &a.cells {
        Some(spec) => spec
            .split(',')
            .map(|c| {
                let (x, y) = c
                    .split_once(':')
                    .ok_or_else(|| CliError::Config(format!("bad transfer cell {c:?}; expected TRAIN:TEST")))?;
                Ok((x.trim().parse()?, y.trim().parse()?))
            })
            .collect::<Result<_>>()?,
        None => section.parsed_cells()?,
    };
    if cells.is_empty() {
        return Err(CliError::Config("no transfer cells: pass --cells or set transfer.cells".into()).into());
    }
    let ratios = a.ratios.0;
    ratios.validate()?;
    let it = load_corpus(&a.it)?;
    let cl = load_corpus(&a.cl)?;
    let mut all: Vec<DocumentRecord> = it.iter().chain(&cl).cloned().collect();
    let mut data = TransferData::new(split_docs(&it, ratios, a.split_seed)?, split_docs(&cl, ratios, a.split_seed)?);
    let g_mapping = a.g_mapping.clone().or(section.g_mapping.clone());
    if let Some(g_path) = &a.g {
        let mapping_path = g_mapping.as_ref().ok_or_else(|| {
            rrseg::Error::MissingMapping("the G corpus needs --g-mapping (foreign label to main label)".into())
        })?;
        let mapping = LabelMapping::from_file(mapping_path)?;
        let g = load_foreign_corpus(g_path, &mapping, Domain::G)?;
        all.extend(g.iter().cloned());
        data = data.with_g(split_docs(&g, ratios, a.split_seed)?, &mapping)?;
    }
    let builder = InputBuilder::new(recipe(ctx, &a.input)?, &ctx.cache_dir)?;
    let base = model_config(ctx, &a.hyper, &builder)?;
    let mut manifest = RunManifest::new(
        "transfer",
        &serde_json::json!({
            "inputs": builder.recipe(),
            "model": base,
            "cells": cells.iter().map(|(x, y)| format!("{x}:{y}")).collect::<Vec<_>>(),
            "ratios": ratios,
        }),
        a.seeds.0.clone(),
    );
    manifest.split_seed = Some(a.split_seed);
    for p in [Some(&a.it), Some(&a.cl), a.g.as_ref(), g_mapping.as_ref()].into_iter().flatten() {
        manifest.add_input(p)?;
    }
    let run = open_run(ctx, a.out.as_deref(), &manifest)?;

    let examples: BTreeMap<String, TrainExample> = {
        let list = builder.examples(&all)?;
        let n = list.len();
        let map: BTreeMap<_, _> = list.into_iter().map(|e| (e.doc_id.clone(), e)).collect();
        if map.len() != n {
            return Err(CliError::Data("document ids collide across the transfer corpora".into()).into());
        }
        map
    };
    let variant = base.variant.name();
    let per_seed: Vec<Vec<TransferRun>> = a
        .seeds
        .0
        .par_iter()
        .map(|&seed| {
            let mut config = base.clone();
            config.seed = seed;
            let runs = run_transfer(&cells, variant, &data, |split| {
                let trained =
                    train_sequence_labeler(config.clone(), &lookup(&examples, &split.train), &lookup(&examples, &split.val))?;
                Ok(Labeler {
                    model: trained.model,
                    examples: &examples,
                })
            })?;
            Ok(runs)
        })
        .collect::<Result<_>>()?;

    let mean_f1 = |i: usize| SeedSummary::of(&per_seed.iter().map(|r| r[i].f1).collect::<Vec<_>>()).expect("seeds");
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for (i, &(x, y)) in cells.iter().enumerate() {
        let f1 = mean_f1(i);
        let in_domain = cells.iter().position(|&c| c == (x, x)).map(mean_f1);
        let delta = in_domain.map(|r| domain_transfer_delta(r.mean, f1.mean)).transpose()?;
        rows.push(vec![
            x.to_string(),
            y.to_string(),
            variant.to_string(),
            format!("{:.6}", f1.mean),
            format!("{:.6}", f1.stdev),
            fmt_opt(in_domain.map(|s| s.mean)),
            fmt_opt(delta),
        ]);
        table.push(serde_json::json!({
            "train": x, "test": y, "variant": variant, "f1": f1,
            "in_domain_f1": in_domain.map(|s| s.mean), "delta_g": delta,
        }));
    }
    write_csv(
        &run.join("transfer.csv"),
        &["train", "test", "variant", "f1", "stdev", "in_domain_f1", "delta_g"],
        &rows,
    )?;
    rrseg::util::write_json(&run.join("transfer.json"), &serde_json::json!({ "table": table, "per_seed": per_seed }))?;
    close_run(&run, &mut manifest, &["transfer.csv", "transfer.json"])?;
    print_json(&serde_json::json!({ "run": run, "table": table }))
}

fn whitespace_tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

fn excluded_path(out: &Path) -> std::path::PathBuf {
    let stem = out.file_stem().unwrap_or_default().to_string_lossy();
    out.with_file_name(format!("{stem}.excluded.json"))
}

pub fn extract_rr(_ctx: &Context, a: ExtractRrArgs) -> Result<()> {
    let mut docs = load_corpus(&a.corpus)?;
    if let Some(p) = &a.exclude {
        let skip: Vec<String> = rrseg::util::read_json(p)?;
        docs.retain(|d| !skip.contains(&d.doc_id));
    }
    let outcomes: BTreeMap<String, u8> = match &a.outcomes {
        Some(p) => rrseg::util::read_json(p)?,
        None => BTreeMap::new(),
    };
    let mut predicted: Option<BTreeMap<String, Vec<MainLabel>>> = match (a.source, &a.predictions) {
        (RrSourceArg::Predicted, Some(p)) => Some(
            read_predictions(p)?
                .into_iter()
                .map(|pr| {
                    let labels = pr.labels.iter().map(|l| l.parse()).collect::<rrseg::Result<Vec<MainLabel>>>()?;
                    Ok((pr.doc_id, labels))
                })
                .collect::<Result<_>>()?,
        ),
        (RrSourceArg::Predicted, None) => {
            return Err(CliError::Config("--source predicted needs --predictions".into()).into())
        }
        _ => None,
    };
    if a.strip_decisions {
        let filter = DecisionFilter::default_patterns();
        for doc in &mut docs {
            let keep: Vec<bool> = doc.sentences.iter().map(|s| !filter.is_decision(&s.text)).collect();
            if let Some(labels) = predicted.as_mut().and_then(|m| m.get_mut(&doc.doc_id)) {
                if labels.len() == keep.len() {
                    let mut k = keep.iter();
                    labels.retain(|_| *k.next().expect("same length"));
                }
            }
            *doc = filter.strip(doc);
        }
    }
    let (inputs, excluded): (Vec<JudgmentInput>, Vec<String>) = match a.source {
        RrSourceArg::LastK => (
            docs.iter()
                .map(|d| {
                    let mut input = last_k_tokens(d, a.k, whitespace_tokens);
                    input.outcome = outcomes.get(&d.doc_id).copied();
                    input
                })
                .collect(),
            Vec::new(),
        ),
        source => {
            let wanted = a
                .labels
                .split(',')
                .map(|l| l.trim().parse())
                .collect::<rrseg::Result<Vec<MainLabel>>>()?;
            let src = match (source, &predicted) {
                (RrSourceArg::Predicted, Some(map)) => RrSource::Predicted(map),
                _ => RrSource::Gold,
            };
            let ex = extract_rr_for_judgment(&docs, src, &wanted, &outcomes)?;
            (ex.inputs, ex.excluded)
        }
    };
    rrseg::util::write_jsonl(&a.out, &inputs)?;
    rrseg::util::write_json(&excluded_path(&a.out), &excluded)?;
    print_json(&serde_json::json!({ "included": inputs.len(), "excluded": excluded.len() }))
}

pub fn judge(_ctx: &Context, a: JudgeArgs) -> Result<()> {
    let inputs: Vec<JudgmentInput> = rrseg::util::read_jsonl(&a.inputs)?;
    let classifier = ProcessClassifier::spawn(&a.classifier, &a.classifier_args);
    let outcome = judgment_eval(
        classifier.as_ref().map_err(|e| rrseg::Error::Encoder(e.to_string())),
        &inputs,
    )?;
    if let Some(out) = &a.out {
        rrseg::util::write_json(out, &outcome)?;
    }
    match &outcome {
        JudgmentOutcome::Completed { report } => print_json(&serde_json::json!({
            "status": "completed",
            "documents": inputs.len(),
            "macro_f1": report.macro_f1,
            "per_label_f1": report.per_label_f1,
        })),
        JudgmentOutcome::Skipped { reason } => {
            log::warn!("judgment run skipped: {reason}");
            print_json(&serde_json::json!({ "status": "skipped", "reason": reason }))
        }
    }
}
