use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What to do with a label that has TP = FP = FN = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyLabelPolicy {
    /// Score it as 0.
    #[default]
    Zero,
    /// Leave it out of the macro average.
    Skip,
}

/// Which labels of the declared set enter the macro average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportPolicy {
    /// Only labels occurring in the references or the predictions.
    #[default]
    PresentOnly,
    /// Every label of the declared set.
    AllLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MacroOptions {
    pub support: SupportPolicy,
    pub empty: EmptyLabelPolicy,
}

/// Provenance attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Labels that entered the macro average, in declared order.
    pub labels: Vec<String>,
    pub per_label_f1: BTreeMap<String, f64>,
    /// Reference counts per label.
    pub support: BTreeMap<String, usize>,
    pub macro_f1: f64,
    pub options: MacroOptions,
    #[serde(default)]
    pub metadata: RunMetadata,
}

impl MetricsReport {
    pub fn f1(&self, label: &str) -> Option<f64> {
        self.per_label_f1.get(label).copied()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `label,f1,support` rows followed by a `macro` row.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        w.write_record(["label", "f1", "support"]).map_err(csv_err)?;
        for label in &self.labels {
            w.write_record([
                label.clone(),
                format!("{:.6}", self.per_label_f1[label]),
                self.support.get(label).copied().unwrap_or(0).to_string(),
            ])
            .map_err(csv_err)?;
        }
        let total: usize = self.support.values().sum();
        w.write_record(["macro".to_string(), format!("{:.6}", self.macro_f1), total.to_string()])
            .map_err(csv_err)?;
        w.flush().map_err(|e| Error::InvalidInput(format!("csv: {e}")))
    }
}

/// `TP / (TP + (FP + FN) / 2)`, with 0 when all counts are 0.
pub fn label_f1(tp: i64, fp: i64, fn_: i64) -> Result<f64> {
    label_f1_with(tp, fp, fn_, EmptyLabelPolicy::Zero).map(|v| v.unwrap_or(0.0))
}

/// As [`label_f1`], returning `None` for an empty label under [`EmptyLabelPolicy::Skip`].
pub fn label_f1_with(tp: i64, fp: i64, fn_: i64, policy: EmptyLabelPolicy) -> Result<Option<f64>> {
    if tp < 0 || fp < 0 || fn_ < 0 {
        return Err(Error::NegativeCount);
    }
    if tp == 0 && fp == 0 && fn_ == 0 {
        return Ok(match policy {
            EmptyLabelPolicy::Zero => Some(0.0),
            EmptyLabelPolicy::Skip => None,
        });
    }
    let tp = tp as f64;
    Ok(Some(tp / (tp + (fp + fn_) as f64 / 2.0)))
}

/// Macro F1 with the default conventions (present labels only, empty → 0).
pub fn macro_f1<L: Ord + Clone + Display>(
    predictions: &[L],
    references: &[L],
    label_set: &[L],
) -> Result<MetricsReport> {
    macro_f1_with(predictions, references, label_set, MacroOptions::default())
}

pub fn macro_f1_with<L: Ord + Clone + Display>(
    predictions: &[L],
    references: &[L],
    label_set: &[L],
    options: MacroOptions,
) -> Result<MetricsReport> {
    if predictions.len() != references.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: references.len(),
        });
    }
    let declared: BTreeSet<&L> = label_set.iter().collect();
    if let Some(bad) = predictions.iter().chain(references).find(|l| !declared.contains(l)) {
        return Err(Error::LabelOutsideSet(bad.to_string()));
    }
    let mut tp: BTreeMap<&L, i64> = BTreeMap::new();
    let mut fp: BTreeMap<&L, i64> = BTreeMap::new();
    let mut fn_: BTreeMap<&L, i64> = BTreeMap::new();
    for (p, r) in predictions.iter().zip(references) {
        if p == r {
            *tp.entry(r).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fn_.entry(r).or_default() += 1;
        }
    }
    let present: BTreeSet<&L> = predictions.iter().chain(references).collect();
    let mut labels = Vec::new();
    let mut per_label_f1 = BTreeMap::new();
    let mut support = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for label in label_set {
        if !seen.insert(label) {
            continue;
        }
        if options.support == SupportPolicy::PresentOnly && !present.contains(label) {
            continue;
        }
        let t = tp.get(label).copied().unwrap_or(0);
        let p = fp.get(label).copied().unwrap_or(0);
        let n = fn_.get(label).copied().unwrap_or(0);
        if let Some(f1) = label_f1_with(t, p, n, options.empty)? {
            let key = label.to_string();
            per_label_f1.insert(key.clone(), f1);
            support.insert(key.clone(), (t + n) as usize);
            labels.push(key);
        }
    }
    let macro_f1 = if labels.is_empty() {
        0.0
    } else {
        per_label_f1.values().sum::<f64>() / labels.len() as f64
    };
    Ok(MetricsReport {
        labels,
        per_label_f1,
        support,
        macro_f1,
        options,
        metadata: RunMetadata::default(),
    })
}

/// Agreement of annotator B with annotator A, A taken as the reference.
pub fn pairwise_annotator_f1<L: Ord + Clone + Display>(
    cells_a: &[L],
    cells_b: &[L],
    label_set: &[L],
) -> Result<MetricsReport> {
    macro_f1(cells_b, cells_a, label_set)
}

/// Mean pairwise agreement over annotators. For three annotators the pairs
/// are (A1,A2), (A2,A3), (A3,A1); per-label scores are averaged over the
/// pairs in which the label occurs, then over labels.
pub fn aggregate_pairwise_agreement<L: Ord + Clone + Display>(
    annotators: &[Vec<L>],
    label_set: &[L],
) -> Result<MetricsReport> {
    let k = annotators.len();
    if k < 2 {
        return Err(Error::InvalidInput("need at least two annotators".into()));
    }
    let pairs: Vec<(usize, usize)> = if k == 3 {
        vec![(0, 1), (1, 2), (2, 0)]
    } else {
        (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect()
    };
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut support: BTreeMap<String, usize> = BTreeMap::new();
    for (a, b) in pairs {
        let report = pairwise_annotator_f1(&annotators[a], &annotators[b], label_set)?;
        for (label, f1) in &report.per_label_f1 {
            let e = sums.entry(label.clone()).or_insert((0.0, 0));
            e.0 += f1;
            e.1 += 1;
        }
        for (label, s) in &report.support {
            *support.entry(label.clone()).or_default() += s;
        }
    }
    let mut labels = Vec::new();
    let mut per_label_f1 = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for label in label_set {
        let key = label.to_string();
        if !seen.insert(key.clone()) {
            continue;
        }
        if let Some((sum, n)) = sums.get(&key) {
            per_label_f1.insert(key.clone(), sum / *n as f64);
            labels.push(key);
        }
    }
    let macro_f1 = if labels.is_empty() {
        0.0
    } else {
        per_label_f1.values().sum::<f64>() / labels.len() as f64
    };
    Ok(MetricsReport {
        labels,
        per_label_f1,
        support,
        macro_f1,
        options: MacroOptions::default(),
        metadata: RunMetadata::default(),
    })
}
