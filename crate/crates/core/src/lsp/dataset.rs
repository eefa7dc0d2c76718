use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::corpus::DocumentRecord;
use crate::{Error, Result};

/// Two consecutive sentences and whether their main labels differ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftPair {
    pub doc_id: String,
    /// Index of the first sentence; the second is `i + 1`.
    pub i: usize,
    pub text_a: String,
    pub text_b: String,
    pub label: u8,
}

/// Shift labels of a gold label sequence: `y[i] = 1` iff `gold[i] != gold[i+1]`.
pub fn shift_labels<L: PartialEq>(gold: &[L]) -> Vec<u8> {
    gold.windows(2).map(|w| u8::from(w[0] != w[1])).collect()
}

/// Which gold labels decide a shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairGranularity {
    /// The seven main labels.
    #[default]
    Main,
    /// The thirteen fine-grained roles.
    Fine,
}

fn doc_shift_labels(doc: &DocumentRecord, granularity: PairGranularity) -> Result<Vec<u8>> {
    match granularity {
        PairGranularity::Main => Ok(shift_labels(&doc.main_labels()?)),
        PairGranularity::Fine => {
            let roles = doc
                .sentences
                .iter()
                .map(|s| {
                    s.gold.ok_or_else(|| Error::MissingGold {
                        doc_id: doc.doc_id.clone(),
                        sentence: s.index,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(shift_labels(&roles))
        }
    }
}

/// All adjacent pairs of every document (`n - 1` per document), labelled by
/// main-label changes.
pub fn build_shift_dataset(docs: &[DocumentRecord]) -> Result<Vec<ShiftPair>> {
    build_shift_dataset_with(docs, PairGranularity::Main)
}

pub fn build_shift_dataset_with(docs: &[DocumentRecord], granularity: PairGranularity) -> Result<Vec<ShiftPair>> {
    let per_doc = docs
        .par_iter()
        .map(|doc| doc_pairs(doc, granularity))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_doc.into_iter().flatten().collect())
}

fn doc_pairs(doc: &DocumentRecord, granularity: PairGranularity) -> Result<Vec<ShiftPair>> {
    let labels = doc_shift_labels(doc, granularity)?;
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| ShiftPair {
            doc_id: doc.doc_id.clone(),
            i,
            text_a: doc.sentences[i].text.clone(),
            text_b: doc.sentences[i + 1].text.clone(),
            label,
        })
        .collect())
}

pub fn positive_rate(pairs: &[ShiftPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().filter(|p| p.label == 1).count() as f64 / pairs.len() as f64
}

pub fn write_shift_pairs(path: &Path, pairs: &[ShiftPair]) -> Result<()> {
    crate::util::write_jsonl(path, pairs)
}

pub fn read_shift_pairs(path: &Path) -> Result<Vec<ShiftPair>> {
    crate::util::read_jsonl(path)
}

/// A document prepared for shift models: texts, optional frozen sentence
/// embeddings and, when gold labels exist, its shift labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftDoc {
    pub doc_id: String,
    pub texts: Vec<String>,
    pub embeddings: Option<Array2<f32>>,
    pub labels: Option<Vec<u8>>,
}

impl ShiftDoc {
    /// Labels are filled in when every sentence has a main label.
    pub fn from_record(doc: &DocumentRecord, embeddings: Option<Array2<f32>>) -> Self {
        Self {
            doc_id: doc.doc_id.clone(),
            texts: doc.sentences.iter().map(|s| s.text.clone()).collect(),
            embeddings,
            labels: doc.main_labels().ok().map(|l| shift_labels(&l)),
        }
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn pairs(&self) -> usize {
        self.len().saturating_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Domain, MainLabel, SentenceRecord};

    pub(crate) fn labelled(id: &str, labels: &[MainLabel]) -> DocumentRecord {
        DocumentRecord {
            doc_id: id.into(),
            domain: Domain::It,
            sentences: labels
                .iter()
                .enumerate()
                .map(|(i, l)| {
                    let mut s = SentenceRecord::new(i, format!("s{i}"));
                    s.gold_main = Some(*l);
                    s
                })
                .collect(),
        }
    }

    #[test]
    fn rule_and_counts() {
        use MainLabel::*;
        let pairs = build_shift_dataset(&[labelled("a", &[Fac, Fac, Arg]), labelled("b", &[Rpc])]).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs.iter().map(|p| p.label).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!((pairs[1].text_a.as_str(), pairs[1].text_b.as_str()), ("s1", "s2"));
        assert_eq!(positive_rate(&pairs), 0.5);
    }

    #[test]
    fn unlabelled_sentence_is_an_error() {
        let mut d = labelled("a", &[MainLabel::Fac, MainLabel::Fac]);
        d.sentences[1].gold_main = None;
        assert!(build_shift_dataset(&[d.clone()]).is_err());
        assert_eq!(ShiftDoc::from_record(&d, None).labels, None);
    }

    #[test]
    fn jsonl_roundtrip() {
        let pairs = build_shift_dataset(&[labelled("a", &[MainLabel::Sta, MainLabel::Pre])]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        write_shift_pairs(&path, &pairs).unwrap();
        assert_eq!(read_shift_pairs(&path).unwrap(), pairs);
    }
}
