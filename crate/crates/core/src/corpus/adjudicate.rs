use std::collections::BTreeMap;

use super::model::{DocumentRecord, Reduction, RhetoricalRole};
use crate::{Error, Result};

/// Result of majority-vote adjudication over primary labels.
#[derive(Debug, Clone)]
pub struct Adjudication {
    pub doc: DocumentRecord,
    /// Sentences without a strict majority and without an expert override.
    pub unresolved: Vec<usize>,
}

/// Sets `gold` to the strict-majority primary label of each sentence.
///
/// Sentences without a strict majority take their label from `overrides`
/// (which may name any role, including one no annotator chose) or are
/// reported as unresolved. Overriding a sentence that has a majority is an
/// error. Secondary and tertiary roles never vote.
pub fn adjudicate(
    doc: &DocumentRecord,
    overrides: &BTreeMap<usize, RhetoricalRole>,
) -> Result<Adjudication> {
    if let Some((&idx, _)) = overrides.iter().find(|(&i, _)| i >= doc.len()) {
        return Err(Error::InvalidInput(format!(
            "override for sentence {idx} but doc {} has {} sentences",
            doc.doc_id,
            doc.len()
        )));
    }
    let mut out = doc.clone();
    let mut unresolved = Vec::new();
    for (i, sentence) in out.sentences.iter_mut().enumerate() {
        if sentence.annotations.is_empty() {
            return Err(Error::InvalidAnnotation(format!(
                "sentence {i} of doc {} has no annotations",
                doc.doc_id
            )));
        }
        let mut votes: BTreeMap<RhetoricalRole, usize> = BTreeMap::new();
        for cell in &sentence.annotations {
            *votes.entry(cell.primary).or_default() += 1;
        }
        let total = sentence.annotations.len();
        let majority = votes
            .iter()
            .find(|(_, &count)| 2 * count > total)
            .map(|(&role, _)| role);
        match (majority, overrides.get(&i)) {
            (Some(_), Some(_)) => {
                return Err(Error::OverrideOnMajority {
                    doc_id: doc.doc_id.clone(),
                    sentence: i,
                })
            }
            (Some(role), None) => sentence.gold = Some(role),
            (None, Some(&role)) => sentence.gold = Some(role),
            (None, None) => {
                sentence.gold = None;
                unresolved.push(i);
            }
        }
    }
    Ok(Adjudication {
        doc: out,
        unresolved,
    })
}

/// A document after mapping onto the main label set.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub doc: DocumentRecord,
    pub dropped: usize,
}

impl Reduced {
    /// True when every sentence was dropped; such documents are kept out of splits.
    pub fn is_empty(&self) -> bool {
        self.doc.is_empty()
    }
}

/// Applies the 13→7 reduction map, removing NON and DIS sentences and
/// re-indexing the rest contiguously in their original order.
pub fn reduce_labels(doc: &DocumentRecord) -> Result<Reduced> {
    let mut sentences = Vec::with_capacity(doc.len());
    let mut dropped = 0;
    for (i, s) in doc.sentences.iter().enumerate() {
        let gold = s.gold.ok_or_else(|| Error::MissingGold {
            doc_id: doc.doc_id.clone(),
            sentence: i,
        })?;
        match gold.reduce() {
            Reduction::Keep(label) => {
                let mut kept = s.clone();
                kept.gold_main = Some(label);
                sentences.push(kept);
            }
            Reduction::Drop => dropped += 1,
        }
    }
    let mut out = DocumentRecord {
        doc_id: doc.doc_id.clone(),
        domain: doc.domain,
        sentences,
    };
    out.reindex();
    Ok(Reduced { doc: out, dropped })
}
