use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rrseg::corpus::{load_corpus, CorpusSplit, MainLabel, Part};
use rrseg::distill::{self_train, verify_run_dir, DistillConfig};
use rrseg::experiments::{RunManifest, SeedSummary};
use rrseg::labelers::{
    best_lambda, evaluate as evaluate_model, lambda_grid, sweep_lambda, train_sequence_labeler, write_predictions,
    Checkpoint, SweepRow, Variant,
};
use rrseg::metrics::MetricsReport;

use super::{close_run, fmt_opt, model_config, open_run, part, print_json, write_csv, Data};
use crate::args::{DistillArgs, EvaluateArgs, InputArgs, SweepArgs, TrainArgs};
use crate::error::CliError;
use crate::inputs::{InputBuilder, InputRecipe};
use crate::Context;

pub fn recipe(ctx: &Context, a: &InputArgs) -> Result<InputRecipe> {
    Ok(InputRecipe {
        variant: a.variant.parse()?,
        encoder: ctx.config.encoder(&a.encoder)?,
        shift_model: a.shift_model.clone(),
        shift_encoder: a.shift_encoder.as_deref().map(|s| ctx.config.encoder(s)).transpose()?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub best_epoch: usize,
    pub val_macro_f1: Option<f64>,
    pub test_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub lambda: f32,
    pub corpus: PathBuf,
    pub runs: Vec<SeedResult>,
    pub val: Option<SeedSummary>,
    pub test: Option<SeedSummary>,
}

fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed-{seed}"))
}

/// Seeds with a checkpoint in a training run, ascending.
fn run_seeds(run: &Path) -> Result<Vec<u64>> {
    let mut seeds: Vec<u64> = std::fs::read_dir(run)
        .with_context(|| format!("listing {}", run.display()))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str()?.strip_prefix("seed-")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    if seeds.is_empty() {
        return Err(CliError::Data(format!("{} holds no seed-* checkpoints", run.display())).into());
    }
    Ok(seeds)
}

pub fn train(ctx: &Context, a: TrainArgs) -> Result<()> {
    let data = Data::load(ctx, &a.data)?;
    let builder = InputBuilder::new(recipe(ctx, &a.input)?, &ctx.cache_dir)?;
    let base = model_config(ctx, &a.hyper, &builder)?;
    let mut manifest = RunManifest::new(
        "train",
        &serde_json::json!({ "inputs": builder.recipe(), "model": base }),
        a.seeds.0.clone(),
    );
    data.describe(&mut manifest)?;
    let run = open_run(ctx, a.out.as_deref(), &manifest)?;
    builder.recipe().write(&run)?;
    rrseg::util::write_json(&run.join("split.json"), &data.split)?;

    let train = builder.examples(&data.part(Part::Train))?;
    let val = builder.examples(&data.part(Part::Val))?;
    let test = builder.examples(&data.part(Part::Test))?;
    let ids = builder.encoder_ids();
    let runs: Vec<SeedResult> = a
        .seeds
        .0
        .par_iter()
        .map(|&seed| {
            let mut config = base.clone();
            config.seed = seed;
            let trained = train_sequence_labeler(config, &train, &val)?;
            let test_report = if test.is_empty() {
                None
            } else {
                Some(evaluate_model(&trained.model, &test)?)
            };
            let result = SeedResult {
                seed,
                best_epoch: trained.best_epoch,
                val_macro_f1: trained.best_val_f1,
                test_macro_f1: test_report.as_ref().map(|r| r.macro_f1),
            };
            let dir = seed_dir(&run, seed);
            Checkpoint::from_trained(trained, ids.clone()).save(&dir)?;
            if let Some(r) = &test_report {
                rrseg::util::write_json(&dir.join("test_report.json"), r)?;
            }
            log::info!("seed {seed}: val {:?} test {:?}", result.val_macro_f1, result.test_macro_f1);
            Ok(result)
        })
        .collect::<Result<_>>()?;
    let summary = TrainSummary {
        variant: base.variant,
        lambda: base.lambda,
        corpus: data.corpus_path.clone(),
        val: SeedSummary::of(&runs.iter().filter_map(|r| r.val_macro_f1).collect::<Vec<_>>()),
        test: SeedSummary::of(&runs.iter().filter_map(|r| r.test_macro_f1).collect::<Vec<_>>()),
        runs,
    };
    rrseg::util::write_json(&run.join("summary.json"), &summary)?;
    close_run(&run, &mut manifest, &["inputs.json", "split.json", "summary.json", "seed-*"])?;
    print_json(&serde_json::json!({ "run": run, "val": summary.val, "test": summary.test }))
}

pub fn sweep(ctx: &Context, a: SweepArgs) -> Result<()> {
    let data = Data::load(ctx, &a.data)?;
    let builder = InputBuilder::new(recipe(ctx, &a.input)?, &ctx.cache_dir)?;
    if builder.recipe().variant != Variant::Mtl {
        return Err(CliError::Config("sweep-lambda needs --variant mtl".into()).into());
    }
    let base = model_config(ctx, &a.hyper, &builder)?;
    let grid = lambda_grid(&a.grid)?;
    let mut manifest = RunManifest::new(
        "sweep-lambda",
        &serde_json::json!({ "inputs": builder.recipe(), "model": base, "grid": grid }),
        a.seeds.0.clone(),
    );
    data.describe(&mut manifest)?;
    let run = open_run(ctx, a.out.as_deref(), &manifest)?;
    let train = builder.examples(&data.part(Part::Train))?;
    let val = builder.examples(&data.part(Part::Val))?;
    let per_seed: Vec<(u64, Vec<SweepRow>)> = a
        .seeds
        .0
        .par_iter()
        .map(|&seed| {
            let mut config = base.clone();
            config.seed = seed;
            Ok((seed, sweep_lambda(&config, &grid, &train, &val)?))
        })
        .collect::<Result<_>>()?;
    let curve: Vec<SweepRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let values: Vec<f64> = per_seed.iter().map(|(_, rows)| rows[i].val_macro_f1).collect();
            SweepRow {
                lambda,
                val_macro_f1: values.iter().sum::<f64>() / values.len() as f64,
                best_epoch: per_seed[0].1[i].best_epoch,
            }
        })
        .collect();
    let rows: Vec<Vec<String>> = grid
        .iter()
        .enumerate()
        .map(|(i, lambda)| {
            let values: Vec<f64> = per_seed.iter().map(|(_, rows)| rows[i].val_macro_f1).collect();
            let s = SeedSummary::of(&values).expect("at least one seed");
            vec![format!("{lambda}"), format!("{:.6}", s.mean), format!("{:.6}", s.stdev), s.runs.to_string()]
        })
        .collect();
    write_csv(&run.join("sweep.csv"), &["lambda", "val_macro_f1", "stdev", "runs"], &rows)?;
    let best = best_lambda(&curve).map(|r| r.lambda);
    rrseg::util::write_json(
        &run.join("sweep.json"),
        &serde_json::json!({
            "curve": curve,
            "per_seed": per_seed.iter().map(|(s, r)| serde_json::json!({"seed": s, "rows": r})).collect::<Vec<_>>(),
            "best_lambda": best,
        }),
    )?;
    close_run(&run, &mut manifest, &["sweep.csv", "sweep.json"])?;
    print_json(&serde_json::json!({ "run": run, "best_lambda": best, "points": grid.len() }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRow {
    pub label: String,
    pub summary: Option<SeedSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub corpus: PathBuf,
    pub part: String,
    pub documents: usize,
    pub per_seed: Vec<(u64, MetricsReport)>,
    /// Label-wise rows in report order, then `macro`.
    pub rows: Vec<LabelRow>,
}

fn corpus_of(run: &Path) -> Result<PathBuf> {
    let summary: TrainSummary = rrseg::util::read_json(&run.join("summary.json"))?;
    Ok(summary.corpus)
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<()> {
    let recipe = InputRecipe::read(&a.run)?;
    let corpus = match &a.corpus {
        Some(p) => p.clone(),
        None => corpus_of(&a.run)?,
    };
    let docs = load_corpus(&corpus)?;
    let (selected, part_name) = if a.all {
        (docs.clone(), "all".to_string())
    } else {
        let split_path = a.split.clone().unwrap_or_else(|| a.run.join("split.json"));
        let split: CorpusSplit = rrseg::util::read_json(&split_path)?;
        let p = part(a.part);
        let name = format!("{p:?}").to_lowercase();
        (split.select(&docs, p).into_iter().cloned().collect::<Vec<_>>(), name)
    };
    if selected.is_empty() {
        return Err(CliError::Data(format!("no {part_name} documents to evaluate")).into());
    }
    let builder = InputBuilder::new(recipe, &ctx.cache_dir)?;
    let examples = builder.examples(&selected)?;
    let ids = builder.encoder_ids();
    let seeds = run_seeds(&a.run)?;
    let per_seed: Vec<(u64, MetricsReport)> = seeds
        .iter()
        .map(|&s| {
            let ckpt = Checkpoint::load(&seed_dir(&a.run, s))?;
            ckpt.check_encoders(&ids)?;
            Ok((s, evaluate_model(&ckpt.model, &examples)?))
        })
        .collect::<Result<_>>()?;
    let mut rows: Vec<LabelRow> = MainLabel::REPORT_ORDER
        .iter()
        .map(|l| LabelRow {
            label: l.report_name().to_string(),
            summary: SeedSummary::of(&per_seed.iter().filter_map(|(_, r)| r.f1(l.code())).collect::<Vec<_>>()),
        })
        .collect();
    rows.push(LabelRow {
        label: "macro".into(),
        summary: SeedSummary::of(&per_seed.iter().map(|(_, r)| r.macro_f1).collect::<Vec<_>>()),
    });
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    std::fs::create_dir_all(&out)?;
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.label.clone(),
                fmt_opt(r.summary.map(|s| s.mean)),
                fmt_opt(r.summary.map(|s| s.stdev)),
                r.summary.map_or(0, |s| s.runs).to_string(),
            ]
        })
        .collect();
    write_csv(&out.join("label_wise.csv"), &["label", "f1", "stdev", "runs"], &csv_rows)?;
    let evaluation = Evaluation {
        corpus,
        part: part_name,
        documents: selected.len(),
        per_seed,
        rows,
    };
    rrseg::util::write_json(&out.join("evaluation.json"), &evaluation)?;

    if let Some(path) = &a.predictions {
        let seed = a.predictions_seed.unwrap_or(seeds[0]);
        let ckpt = Checkpoint::load(&seed_dir(&a.run, seed))?;
        let preds = examples
            .iter()
            .map(|ex| ckpt.predict(&ex.doc_id, &ex.input, &ids, false))
            .collect::<rrseg::Result<Vec<_>>>()?;
        write_predictions(path, &preds)?;
    }
    for r in &evaluation.rows {
        match r.summary {
            Some(s) => println!("{:<6} {s}", r.label),
            None => println!("{:<6} n/a", r.label),
        }
    }
    Ok(())
}

pub fn distill(ctx: &Context, a: DistillArgs) -> Result<()> {
    let recipe = InputRecipe::read(&a.teacher_run)?;
    let corpus = corpus_of(&a.teacher_run)?;
    let docs = load_corpus(&corpus)?;
    let split: CorpusSplit = rrseg::util::read_json(&a.teacher_run.join("split.json"))?;
    let teacher_seed = match a.teacher_seed {
        Some(s) => s,
        None => run_seeds(&a.teacher_run)?[0],
    };
    let teacher_dir = seed_dir(&a.teacher_run, teacher_seed);
    let teacher = Checkpoint::load(&teacher_dir)?;
    let builder = InputBuilder::new(recipe, &ctx.cache_dir)?;
    let ids = builder.encoder_ids();
    teacher.check_encoders(&ids)?;

    let mut student = teacher.config().clone();
    student.batch_size = a.student_batch_size;
    let mut cfg = DistillConfig::new(student);
    cfg.seed = a.seed;
    cfg.warm_start = a.warm_start;
    cfg.early_stop = a.early_stop;
    if let Some(v) = a.alpha_u {
        cfg.alpha_u = v;
    }
    if let Some(v) = a.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = a.per_iteration {
        cfg.unlabeled_docs_per_iteration = v;
    }
    cfg.validate()?;

    let mut manifest = RunManifest::new(
        "distill",
        &serde_json::json!({ "teacher_run": a.teacher_run, "teacher_seed": teacher_seed, "distill": cfg }),
        vec![a.seed],
    );
    manifest.split_seed = Some(split.seed);
    manifest.add_input(&corpus)?;
    manifest.add_input(&a.unlabeled)?;
    manifest.add_input(&teacher_dir.join("weights.bin"))?;
    let run = open_run(ctx, a.out.as_deref(), &manifest)?;

    let labeled = builder.examples(&split.select(&docs, Part::Train).into_iter().cloned().collect::<Vec<_>>())?;
    let val = builder.examples(&split.select(&docs, Part::Val).into_iter().cloned().collect::<Vec<_>>())?;
    let held_out: BTreeSet<String> = split.val.iter().chain(&split.test).cloned().collect();
    let unlabeled_docs = load_corpus(&a.unlabeled)?;
    let unlabeled = builder.unlabeled(&unlabeled_docs)?;
    let outcome = self_train(&teacher.model, &labeled, &unlabeled, &val, &held_out, &cfg, Some((&run, &ids)))?;
    verify_run_dir(&run)?;
    close_run(&run, &mut manifest, &["teacher", "iteration_*", "distill_log.json"])?;
    let iterations: Vec<serde_json::Value> = outcome
        .log
        .iterations
        .iter()
        .map(|r| {
            serde_json::json!({
                "iteration": r.iteration,
                "teacher_val_f1": r.teacher_val_f1,
                "student_val_f1": r.student_val_f1,
            })
        })
        .collect();
    print_json(&serde_json::json!({ "run": run, "iterations": iterations, "stopped": outcome.log.stopped }))
}
