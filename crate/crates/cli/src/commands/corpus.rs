use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context as _, Result};

use rrseg::corpus::{
    adjudicate as adjudicate_doc, import_webanno, ingest_raw, label_distribution, load_corpus, reduce_labels,
    save_corpus, shift_statistic, split_by_domain, split_corpus, Domain, MainLabel, PunctuationSplitter,
    RhetoricalRole, RuleSet,
};

use super::print_json;
use crate::args::{AdjudicateArgs, ImportArgs, IngestArgs, ReduceArgs, SplitArgs, StatsArgs};
use crate::error::CliError;
use crate::Context;

fn sorted_entries(dir: &std::path::Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    out.sort();
    Ok(out)
}

fn stem(path: &std::path::Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

pub fn ingest(_ctx: &Context, a: IngestArgs) -> Result<()> {
    let domain: Domain = a.domain.parse()?;
    let rules = match (&a.rules, a.no_rules) {
        (Some(p), _) => RuleSet::from_file(p)?,
        (None, true) => RuleSet::empty(),
        (None, false) => RuleSet::default_rules(),
    };
    let files = if a.input.is_dir() {
        sorted_entries(&a.input)?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect()
    } else {
        vec![a.input.clone()]
    };
    let splitter = PunctuationSplitter::default();
    let mut docs = Vec::new();
    for f in &files {
        let raw = std::fs::read_to_string(f).with_context(|| format!("reading {}", f.display()))?;
        docs.push(ingest_raw(&stem(f), domain, &raw, &rules, &splitter)?);
    }
    save_corpus(&a.out, &docs)?;
    print_json(&serde_json::json!({
        "documents": docs.len(),
        "sentences": docs.iter().map(|d| d.len()).sum::<usize>(),
    }))
}

pub fn import(_ctx: &Context, a: ImportArgs) -> Result<()> {
    let domain: Domain = a.domain.parse()?;
    let mut docs = Vec::new();
    for dir in sorted_entries(&a.input)?.into_iter().filter(|p| p.is_dir()) {
        let mut exports = Vec::new();
        for f in sorted_entries(&dir)?.into_iter().filter(|p| p.extension().is_some_and(|e| e == "tsv")) {
            let text = std::fs::read_to_string(&f).with_context(|| format!("reading {}", f.display()))?;
            exports.push((stem(&f), text));
        }
        if exports.is_empty() {
            continue;
        }
        let refs: Vec<(&str, &str)> = exports.iter().map(|(a, t)| (a.as_str(), t.as_str())).collect();
        docs.push(import_webanno(&stem(&dir), domain, &refs)?);
    }
    if docs.is_empty() {
        return Err(CliError::Data(format!("no annotation exports under {}", a.input.display())).into());
    }
    save_corpus(&a.out, &docs)?;
    print_json(&serde_json::json!({ "documents": docs.len() }))
}

pub fn adjudicate(_ctx: &Context, a: AdjudicateArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let overrides: BTreeMap<String, BTreeMap<usize, RhetoricalRole>> = match &a.overrides {
        Some(p) => rrseg::util::read_json(p)?,
        None => BTreeMap::new(),
    };
    let empty = BTreeMap::new();
    let mut out = Vec::with_capacity(docs.len());
    let mut unresolved: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for doc in &docs {
        let adj = adjudicate_doc(doc, overrides.get(&doc.doc_id).unwrap_or(&empty))?;
        if !adj.unresolved.is_empty() {
            unresolved.insert(doc.doc_id.clone(), adj.unresolved.clone());
        }
        out.push(adj.doc);
    }
    save_corpus(&a.out, &out)?;
    if !unresolved.is_empty() {
        log::warn!("{} documents have sentences without a majority", unresolved.len());
    }
    print_json(&serde_json::json!({ "documents": out.len(), "unresolved": unresolved }))
}

pub fn reduce(_ctx: &Context, a: ReduceArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let mut out = Vec::new();
    let mut dropped_sentences = 0;
    let mut dropped_docs = Vec::new();
    for doc in &docs {
        let r = reduce_labels(doc)?;
        dropped_sentences += r.dropped;
        if r.is_empty() {
            dropped_docs.push(doc.doc_id.clone());
        } else {
            out.push(r.doc);
        }
    }
    save_corpus(&a.out, &out)?;
    print_json(&serde_json::json!({
        "documents": out.len(),
        "dropped_sentences": dropped_sentences,
        "dropped_documents": dropped_docs,
    }))
}

pub fn split(_ctx: &Context, a: SplitArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let split = if a.by_domain {
        split_by_domain(&docs, a.ratios.0, a.seed)?
    } else {
        split_corpus(&docs, a.ratios.0, a.seed)?
    };
    rrseg::util::write_json(&a.out, &split)?;
    print_json(&serde_json::json!({
        "train": split.train.len(),
        "val": split.val.len(),
        "test": split.test.len(),
        "excluded": split.excluded.len(),
        "seed": split.seed,
    }))
}

pub fn stats(_ctx: &Context, a: StatsArgs) -> Result<()> {
    let docs = load_corpus(&a.corpus)?;
    let dist = label_distribution(&docs);
    let shift = shift_statistic(&docs);
    if a.json {
        return print_json(&serde_json::json!({
            "distribution": dist,
            "mean_same_fraction": shift.mean_same_fraction,
            "pooled_same_fraction": shift.pooled_same_fraction,
        }));
    }
    let domains: Vec<&String> = dist.per_domain.keys().collect();
    print!("{:<8}", "label");
    for d in &domains {
        print!("{:>10}", d);
    }
    println!();
    for label in MainLabel::REPORT_ORDER {
        print!("{:<8}", label.report_name());
        for d in &domains {
            print!("{:>10}", dist.per_domain[*d].main[label.code()]);
        }
        println!();
    }
    print!("{:<8}", "docs");
    for d in &domains {
        print!("{:>10}", dist.per_domain[*d].documents);
    }
    println!();
    print!("{:<8}", "sents");
    for d in &domains {
        print!("{:>10}", dist.per_domain[*d].sentences);
    }
    println!();
    let pct = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}%", 100.0 * v));
    println!(
        "same-label neighbours: {} pooled, {} mean over documents",
        pct(shift.pooled_same_fraction),
        pct(shift.mean_same_fraction)
    );
    Ok(())
}
