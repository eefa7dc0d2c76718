use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};

use rrseg::distill::DistillLog;
use rrseg::experiments::RunManifest;
use rrseg::metrics::MetricsReport;

use super::train::{Evaluation, TrainSummary};
use super::{fmt_opt, print_json, write_csv};
use crate::args::ReportArgs;
use crate::Context;

#[derive(Default)]
struct Tables {
    shift: Vec<Vec<String>>,
    labelers: Vec<Vec<String>>,
    label_wise: Vec<Vec<String>>,
    transfer: Vec<Vec<String>>,
    distill: Vec<Vec<String>>,
}

fn run_dirs(root: &Path) -> Result<Vec<(PathBuf, RunManifest)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(root).with_context(|| format!("listing {}", root.display()))? {
        let dir = entry?.path();
        if dir.join("manifest.json").is_file() {
            out.push((dir.clone(), RunManifest::read(&dir)?));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn name(dir: &Path) -> String {
    dir.file_name().unwrap_or_default().to_string_lossy().into_owned()
}

fn collect(dir: &Path, manifest: &RunManifest, t: &mut Tables) -> Result<()> {
    let run = name(dir);
    match manifest.kind.as_str() {
        "train-lsp" => {
            let model = manifest.config["model"].as_str().unwrap_or("").to_string();
            let report: Option<MetricsReport> = dir
                .join("shift_report.json")
                .is_file()
                .then(|| rrseg::util::read_json(&dir.join("shift_report.json")))
                .transpose()?;
            t.shift.push(vec![
                run,
                model,
                fmt_opt(report.as_ref().and_then(|r| r.f1(rrseg::lsp::SHIFT))),
                fmt_opt(report.as_ref().map(|r| r.macro_f1)),
            ]);
        }
        "train" => {
            let s: TrainSummary = rrseg::util::read_json(&dir.join("summary.json"))?;
            t.labelers.push(vec![
                run.clone(),
                s.variant.name().to_string(),
                format!("{}", s.lambda),
                s.runs.len().to_string(),
                fmt_opt(s.val.map(|v| v.mean)),
                fmt_opt(s.val.map(|v| v.stdev)),
                fmt_opt(s.test.map(|v| v.mean)),
                fmt_opt(s.test.map(|v| v.stdev)),
            ]);
            if dir.join("evaluation.json").is_file() {
                let e: Evaluation = rrseg::util::read_json(&dir.join("evaluation.json"))?;
                for r in e.rows {
                    t.label_wise.push(vec![
                        run.clone(),
                        s.variant.name().to_string(),
                        e.part.clone(),
                        r.label,
                        fmt_opt(r.summary.map(|v| v.mean)),
                        fmt_opt(r.summary.map(|v| v.stdev)),
                    ]);
                }
            }
        }
        "transfer" => {
            let v: serde_json::Value = rrseg::util::read_json(&dir.join("transfer.json"))?;
            for row in v["table"].as_array().into_iter().flatten() {
                let num = |x: &serde_json::Value| x.as_f64().map_or_else(String::new, |f| format!("{f:.6}"));
                t.transfer.push(vec![
                    run.clone(),
                    row["train"].as_str().unwrap_or("").into(),
                    row["test"].as_str().unwrap_or("").into(),
                    row["variant"].as_str().unwrap_or("").into(),
                    num(&row["f1"]["mean"]),
                    num(&row["f1"]["stdev"]),
                    num(&row["delta_g"]),
                ]);
            }
        }
        "distill" => {
            let log: DistillLog = rrseg::util::read_json(&dir.join("distill_log.json"))?;
            for r in &log.iterations {
                t.distill.push(vec![
                    run.clone(),
                    r.iteration.to_string(),
                    format!("{}", r.alpha_u),
                    r.unlabeled_docs.len().to_string(),
                    fmt_opt(r.teacher_val_f1),
                    fmt_opt(r.student_val_f1),
                ]);
            }
        }
        other => log::debug!("{run}: no table for run kind {other:?}"),
    }
    Ok(())
}

/// Rebuilds the summary CSVs from what the runs wrote; nothing is retrained
/// or re-evaluated.
pub fn report(ctx: &Context, a: ReportArgs) -> Result<()> {
    let root = a.runs.unwrap_or_else(|| ctx.runs_dir.clone());
    let out = a.out.unwrap_or_else(|| root.join("reports"));
    let mut t = Tables::default();
    let runs = run_dirs(&root)?;
    for (dir, manifest) in &runs {
        let changed = manifest.changed_inputs();
        if !changed.is_empty() {
            log::warn!("{}: inputs changed since the run: {changed:?}", dir.display());
        }
        collect(dir, manifest, &mut t).with_context(|| format!("reading run {}", dir.display()))?;
    }
    std::fs::create_dir_all(&out)?;
    let tables: [(&str, &[&str], &Vec<Vec<String>>); 5] = [
        ("shift_models.csv", &["run", "model", "shift_f1", "macro_f1"], &t.shift),
        (
            "labelers.csv",
            &["run", "variant", "lambda", "seeds", "val_f1", "val_stdev", "test_f1", "test_stdev"],
            &t.labelers,
        ),
        ("label_wise.csv", &["run", "variant", "part", "label", "f1", "stdev"], &t.label_wise),
        ("transfer.csv", &["run", "train", "test", "variant", "f1", "stdev", "delta_g"], &t.transfer),
        (
            "distillation.csv",
            &["run", "iteration", "alpha_u", "unlabeled_docs", "teacher_val_f1", "student_val_f1"],
            &t.distill,
        ),
    ];
    let mut written = Vec::new();
    for (file, header, rows) in tables {
        write_csv(&out.join(file), header, rows)?;
        written.push(serde_json::json!({ "file": file, "rows": rows.len() }));
    }
    print_json(&serde_json::json!({ "runs": runs.len(), "out": out, "tables": written }))
}
