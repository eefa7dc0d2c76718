use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{DocumentRecord, Domain};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let sum = self.train + self.val + self.test;
        let in_range = [self.train, self.val, self.test]
            .iter()
            .all(|r| (0.0..=1.0).contains(r));
        if !in_range || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidRatios(sum));
        }
        Ok(())
    }
}

/// Document-level train/val/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Documents left out because they have no sentences (e.g. all dropped by reduction).
    #[serde(default)]
    pub excluded: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Train,
    Val,
    Test,
}

impl CorpusSplit {
    pub fn part_of(&self, doc_id: &str) -> Option<Part> {
        if self.train.iter().any(|d| d == doc_id) {
            Some(Part::Train)
        } else if self.val.iter().any(|d| d == doc_id) {
            Some(Part::Val)
        } else if self.test.iter().any(|d| d == doc_id) {
            Some(Part::Test)
        } else {
            None
        }
    }

    /// Documents of `docs` falling in `part`, in split order.
    pub fn select<'a>(&self, docs: &'a [DocumentRecord], part: Part) -> Vec<&'a DocumentRecord> {
        let ids = match part {
            Part::Train => &self.train,
            Part::Val => &self.val,
            Part::Test => &self.test,
        };
        let by_id: BTreeMap<&str, &DocumentRecord> =
            docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
        ids.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect()
    }

    /// Checks that the four lists partition `all_ids`.
    pub fn is_partition_of<'a>(&self, all_ids: impl IntoIterator<Item = &'a str>) -> bool {
        let expected: BTreeSet<&str> = all_ids.into_iter().collect();
        let mut seen = BTreeSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test).chain(&self.excluded) {
            if !seen.insert(id.as_str()) {
                return false;
            }
        }
        seen == expected
    }

    fn extend(&mut self, other: CorpusSplit) {
        self.train.extend(other.train);
        self.val.extend(other.val);
        self.test.extend(other.test);
        self.excluded.extend(other.excluded);
    }
}

/// Seeded document-level split. Validation and test sizes are
/// `round(n * ratio)`; the remainder goes to train.
pub fn split_corpus(docs: &[DocumentRecord], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit> {
    ratios.validate()?;
    let mut ids: Vec<String> = docs
        .iter()
        .filter(|d| !d.is_empty())
        .map(|d| d.doc_id.clone())
        .collect();
    let excluded: Vec<String> = docs
        .iter()
        .filter(|d| d.is_empty())
        .map(|d| d.doc_id.clone())
        .collect();
    if ids.len() < 3 {
        return Err(Error::TooFewDocuments {
            needed: 3,
            got: ids.len(),
        });
    }
    ids.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let n = ids.len() as f64;
    let n_val = (n * ratios.val).round() as usize;
    let n_test = (n * ratios.test).round() as usize;
    if n_val + n_test > ids.len() {
        return Err(Error::InvalidRatios(ratios.train + ratios.val + ratios.test));
    }
    let test = ids.split_off(ids.len() - n_test);
    let val = ids.split_off(ids.len() - n_val);
    Ok(CorpusSplit {
        train: ids,
        val,
        test,
        excluded,
        seed,
    })
}

/// Splits each domain separately and takes the union, so a combined
/// (e.g. IT+CL) split contains exactly the per-domain splits.
pub fn split_by_domain(
    docs: &[DocumentRecord],
    ratios: SplitRatios,
    seed: u64,
) -> Result<CorpusSplit> {
    let mut by_domain: BTreeMap<Domain, Vec<DocumentRecord>> = BTreeMap::new();
    for d in docs {
        by_domain.entry(d.domain).or_default().push(d.clone());
    }
    let mut out = CorpusSplit {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        excluded: Vec::new(),
        seed,
    };
    for group in by_domain.values() {
        out.extend(split_corpus(group, ratios, seed)?);
    }
    Ok(out)
}
