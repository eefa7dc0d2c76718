use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::{DocumentRecord, Domain, MainLabel, RhetoricalRole};

/// Sentence counts for one domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainCounts {
    pub documents: usize,
    pub sentences: usize,
    /// Counts over the 13 fine-grained gold roles.
    pub fine: BTreeMap<String, usize>,
    /// Counts over the 7 main labels (reduced gold).
    pub main: BTreeMap<String, usize>,
    /// Sentences with no gold role at all.
    pub unlabeled: usize,
}

impl DomainCounts {
    pub fn mean_sentences_per_doc(&self) -> f64 {
        if self.documents == 0 {
            0.0
        } else {
            self.sentences as f64 / self.documents as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub per_domain: BTreeMap<String, DomainCounts>,
}

impl LabelDistribution {
    pub fn total_sentences(&self) -> usize {
        self.per_domain.values().map(|c| c.sentences).sum()
    }

    pub fn domain(&self, domain: Domain) -> DomainCounts {
        self.per_domain.get(domain.code()).cloned().unwrap_or_default()
    }
}

/// Exact per-domain label counts. Every role and main label appears with
/// an explicit (possibly zero) count for each domain present.
pub fn label_distribution(docs: &[DocumentRecord]) -> LabelDistribution {
    let mut per_domain: BTreeMap<String, DomainCounts> = BTreeMap::new();
    for doc in docs {
        let counts = per_domain.entry(doc.domain.code().to_string()).or_insert_with(|| {
            DomainCounts {
                fine: RhetoricalRole::ALL.iter().map(|r| (r.code().to_string(), 0)).collect(),
                main: MainLabel::ALL.iter().map(|l| (l.code().to_string(), 0)).collect(),
                ..DomainCounts::default()
            }
        });
        counts.documents += 1;
        counts.sentences += doc.len();
        for s in &doc.sentences {
            if let Some(g) = s.gold {
                *counts.fine.get_mut(g.code()).expect("all roles seeded") += 1;
            } else if s.gold_main.is_none() {
                counts.unlabeled += 1;
            }
            if let Some(m) = s.main_label() {
                *counts.main.get_mut(m.code()).expect("all labels seeded") += 1;
            }
        }
    }
    LabelDistribution { per_domain }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocShift {
    pub doc_id: String,
    pub pairs: usize,
    pub same: usize,
}

impl DocShift {
    pub fn same_fraction(&self) -> f64 {
        self.same as f64 / self.pairs as f64
    }

    pub fn shift_fraction(&self) -> f64 {
        1.0 - self.same_fraction()
    }
}

/// How often consecutive sentences keep the same main label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftStatistic {
    /// One entry per document with at least two labeled sentences.
    pub per_doc: Vec<DocShift>,
    /// Mean over documents of the per-document same-label fraction.
    pub mean_same_fraction: Option<f64>,
    /// Same-label pairs over all pairs in the corpus.
    pub pooled_same_fraction: Option<f64>,
}

/// Same-label statistic over main labels. Documents with fewer than two
/// sentences have no pairs and are left out of both averages. Sentences
/// without a main label break the chain: only pairs of labeled neighbours count.
pub fn shift_statistic(docs: &[DocumentRecord]) -> ShiftStatistic {
    let mut per_doc = Vec::new();
    for doc in docs {
        let labels: Vec<Option<MainLabel>> = doc.sentences.iter().map(|s| s.main_label()).collect();
        let mut pairs = 0;
        let mut same = 0;
        for w in labels.windows(2) {
            if let (Some(a), Some(b)) = (w[0], w[1]) {
                pairs += 1;
                if a == b {
                    same += 1;
                }
            }
        }
        if pairs > 0 {
            per_doc.push(DocShift {
                doc_id: doc.doc_id.clone(),
                pairs,
                same,
            });
        }
    }
    let mean_same_fraction = if per_doc.is_empty() {
        None
    } else {
        Some(per_doc.iter().map(DocShift::same_fraction).sum::<f64>() / per_doc.len() as f64)
    };
    let total_pairs: usize = per_doc.iter().map(|d| d.pairs).sum();
    let pooled_same_fraction = (total_pairs > 0)
        .then(|| per_doc.iter().map(|d| d.same).sum::<usize>() as f64 / total_pairs as f64);
    ShiftStatistic {
        per_doc,
        mean_same_fraction,
        pooled_same_fraction,
    }
}
