use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, Reduction, RhetoricalRole};
use crate::{Error, Result};

/// Fleiss' kappa for `N` items each rated by `raters_per_item` raters.
///
/// A single-category table (expected agreement of 1) gives 1.0 when observed
/// agreement is also 1, and an error otherwise.
pub fn fleiss_kappa(item_label_counts: &[Vec<usize>], raters_per_item: usize) -> Result<f64> {
    let n = raters_per_item;
    if n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 raters per item, got {n}")));
    }
    if item_label_counts.is_empty() {
        return Err(Error::InvalidInput("no items".into()));
    }
    let k = item_label_counts[0].len();
    let mut column_totals = vec![0usize; k];
    let mut p_bar = 0.0;
    for (i, row) in item_label_counts.iter().enumerate() {
        if row.len() != k {
            return Err(Error::DimensionMismatch {
                context: format!("item {i}"),
                expected: k,
                actual: row.len(),
            });
        }
        let total: usize = row.iter().sum();
        if total != n {
            return Err(Error::InvalidInput(format!(
                "item {i} has {total} ratings, expected {n}"
            )));
        }
        let sq: usize = row.iter().map(|c| c * c).sum();
        p_bar += (sq - n) as f64 / (n * (n - 1)) as f64;
        for (t, c) in column_totals.iter_mut().zip(row) {
            *t += c;
        }
    }
    let items = item_label_counts.len() as f64;
    p_bar /= items;
    let grand = items * n as f64;
    let p_e: f64 = column_totals.iter().map(|&t| (t as f64 / grand).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return if (1.0 - p_bar).abs() < 1e-12 {
            Ok(1.0)
        } else {
            Err(Error::KappaUndefined(p_e))
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Label grouping used when measuring annotator agreement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementGrouping {
    /// All thirteen fine-grained roles.
    Fine13,
    /// The seven main labels plus DIS; NON cells are ignored.
    Main8,
}

impl AgreementGrouping {
    pub fn categories(self) -> Vec<String> {
        match self {
            AgreementGrouping::Fine13 => {
                RhetoricalRole::ALL.iter().map(|r| r.code().to_string()).collect()
            }
            AgreementGrouping::Main8 => {
                let mut v: Vec<String> = crate::corpus::MainLabel::REPORT_ORDER
                    .iter()
                    .map(|l| l.report_name().to_string())
                    .collect();
                v.push("DIS".to_string());
                v
            }
        }
    }

    pub fn map(self, role: RhetoricalRole) -> Option<String> {
        match self {
            AgreementGrouping::Fine13 => Some(role.code().to_string()),
            AgreementGrouping::Main8 => match role {
                RhetoricalRole::Dis => Some("DIS".to_string()),
                RhetoricalRole::Non => None,
                other => match other.reduce() {
                    Reduction::Keep(l) => Some(l.report_name().to_string()),
                    Reduction::Drop => None,
                },
            },
        }
    }
}

/// Aligned annotations: one label sequence per annotator over the sentences
/// every annotator labelled with an in-grouping role.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatorTable {
    pub categories: Vec<String>,
    pub annotators: Vec<String>,
    /// `sequences[a][item]`
    pub sequences: Vec<Vec<String>>,
}

impl AnnotatorTable {
    pub fn from_documents(docs: &[DocumentRecord], grouping: AgreementGrouping) -> Result<Self> {
        let mut annotators: Vec<String> = docs
            .iter()
            .flat_map(|d| &d.sentences)
            .flat_map(|s| s.annotations.iter().map(|c| c.annotator_id.clone()))
            .collect();
        annotators.sort();
        annotators.dedup();
        if annotators.len() < 2 {
            return Err(Error::InvalidInput("agreement needs at least two annotators".into()));
        }
        let mut sequences = vec![Vec::new(); annotators.len()];
        for sentence in docs.iter().flat_map(|d| &d.sentences) {
            let by_annotator: BTreeMap<&str, RhetoricalRole> = sentence
                .annotations
                .iter()
                .map(|c| (c.annotator_id.as_str(), c.primary))
                .collect();
            let row: Option<Vec<String>> = annotators
                .iter()
                .map(|a| by_annotator.get(a.as_str()).and_then(|r| grouping.map(*r)))
                .collect();
            if let Some(row) = row {
                for (seq, label) in sequences.iter_mut().zip(row) {
                    seq.push(label);
                }
            }
        }
        Ok(Self {
            categories: grouping.categories(),
            annotators,
            sequences,
        })
    }

    pub fn items(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }

    /// Per-item category counts suitable for [`fleiss_kappa`].
    pub fn category_counts(&self) -> Vec<Vec<usize>> {
        let index: BTreeMap<&str, usize> = self
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        (0..self.items())
            .map(|item| {
                let mut row = vec![0; self.categories.len()];
                for seq in &self.sequences {
                    row[index[seq[item].as_str()]] += 1;
                }
                row
            })
            .collect()
    }

    pub fn fleiss_kappa(&self) -> Result<f64> {
        fleiss_kappa(&self.category_counts(), self.annotators.len())
    }
}

/// Shorthand for `AnnotatorTable::from_documents(..).category_counts()`.
pub fn category_counts(
    docs: &[DocumentRecord],
    grouping: AgreementGrouping,
) -> Result<(Vec<Vec<usize>>, usize)> {
    let table = AnnotatorTable::from_documents(docs, grouping)?;
    Ok((table.category_counts(), table.annotators.len()))
}
