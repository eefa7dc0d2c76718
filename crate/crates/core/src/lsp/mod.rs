//! Label shift prediction: does the role change between two adjacent
//! sentences?
//!
//! Pairs are built from gold labels ([`build_shift_dataset`]). Two models
//! learn the task: [`SiameseShift`] reads frozen sentence embeddings of both
//! sentences, [`PairShift`] fine-tunes a token encoder over the joint pair.
//! The hidden layer feeding each model's output layer is the pair's shift
//! embedding, consumed by the shift-aware labelers.

mod dataset;
mod pair;
mod siamese;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use dataset::{
    build_shift_dataset, build_shift_dataset_with, positive_rate, read_shift_pairs, shift_labels,
    write_shift_pairs, PairGranularity, ShiftDoc, ShiftPair,
};
pub use pair::{train_pair_shift, PairShift};
pub use siamese::{siamese_input, train_siamese_shift, SiameseShift, SIAMESE_WIDTHS};

use crate::encoders::EmbeddingArchive;
use crate::metrics::{macro_f1, MetricsReport};
use crate::Result;

pub const NO_SHIFT: &str = "no_shift";
pub const SHIFT: &str = "shift";

/// A trained shift classifier over adjacent sentence pairs.
pub trait ShiftModel: Send + Sync {
    fn model_id(&self) -> String;

    /// Width of the representation feeding the output layer.
    fn shift_embedding_dim(&self) -> usize;

    /// Shift embeddings of the `n - 1` adjacent pairs of a document. Models
    /// over frozen sentence vectors need `sentence_embeddings` (`n` rows).
    fn embed_pairs(&self, texts: &[&str], sentence_embeddings: Option<ArrayView2<f32>>) -> Result<Array2<f32>>;

    /// Probability of a shift for each adjacent pair.
    fn shift_probabilities(&self, texts: &[&str], sentence_embeddings: Option<ArrayView2<f32>>) -> Result<Vec<f32>>;

    fn predict(&self, texts: &[&str], sentence_embeddings: Option<ArrayView2<f32>>) -> Result<Vec<u8>> {
        Ok(self
            .shift_probabilities(texts, sentence_embeddings)?
            .into_iter()
            .map(|p| u8::from(p > 0.5))
            .collect())
    }
}

impl<M: ShiftModel + ?Sized> ShiftModel for Box<M> {
    fn model_id(&self) -> String {
        (**self).model_id()
    }
    fn shift_embedding_dim(&self) -> usize {
        (**self).shift_embedding_dim()
    }
    fn embed_pairs(&self, texts: &[&str], e: Option<ArrayView2<f32>>) -> Result<Array2<f32>> {
        (**self).embed_pairs(texts, e)
    }
    fn shift_probabilities(&self, texts: &[&str], e: Option<ArrayView2<f32>>) -> Result<Vec<f32>> {
        (**self).shift_probabilities(texts, e)
    }
}

/// Optimisation schedule shared by both shift models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSchedule {
    pub epochs: usize,
    pub learning_rate: f32,
    /// Pairs per optimiser step.
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Loss weight of positive (shift) pairs; `None` trains unweighted.
    #[serde(default)]
    pub positive_weight: Option<f64>,
    #[serde(default)]
    pub grad_clip: Option<f32>,
}

impl ShiftSchedule {
    /// Siamese head defaults: Adam at 1e-3, 32 pairs per step, 10 epochs.
    pub fn siamese() -> Self {
        Self {
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 32,
            seed: 0,
            positive_weight: None,
            grad_clip: Some(5.0),
        }
    }

    /// Pair-model fine-tuning defaults: 5 epochs at 2e-5.
    pub fn pair() -> Self {
        Self {
            epochs: 5,
            learning_rate: 2e-5,
            batch_size: 32,
            seed: 0,
            positive_weight: None,
            grad_clip: Some(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(crate::Error::InvalidConfig(format!(
                "shift schedule needs batch_size > 0 and a positive learning rate: {self:?}"
            )));
        }
        if self.positive_weight.is_some_and(|w| !(w > 0.0)) {
            return Err(crate::Error::InvalidConfig("positive_weight must be > 0".into()));
        }
        Ok(())
    }

    fn weight(&self, label: u8) -> f64 {
        match (label, self.positive_weight) {
            (1, Some(w)) => w,
            _ => 1.0,
        }
    }
}

fn shift_names(labels: &[u8]) -> Vec<&'static str> {
    labels.iter().map(|&l| if l == 1 { SHIFT } else { NO_SHIFT }).collect()
}

/// Binary F1 report over `no_shift` / `shift` from predicted and gold labels.
pub fn shift_report(predicted: &[u8], gold: &[u8]) -> Result<MetricsReport> {
    macro_f1(&shift_names(predicted), &shift_names(gold), &[NO_SHIFT, SHIFT])
}

/// Scores a shift model on labelled documents. The report's `shift` entry
/// is the positive-class F1.
pub fn eval_shift<M: ShiftModel + ?Sized>(model: &M, docs: &[ShiftDoc]) -> Result<MetricsReport> {
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for doc in docs {
        let Some(labels) = &doc.labels else {
            return Err(crate::Error::MissingGold {
                doc_id: doc.doc_id.clone(),
                sentence: 0,
            });
        };
        let texts: Vec<&str> = doc.texts.iter().map(String::as_str).collect();
        predicted.extend(model.predict(&texts, doc.embeddings.as_ref().map(|e| e.view()))?);
        gold.extend_from_slice(labels);
    }
    shift_report(&predicted, &gold)
}

/// Shift embeddings of one document (`n - 1` rows).
pub fn shift_embeddings<M: ShiftModel + ?Sized>(model: &M, doc: &ShiftDoc) -> Result<Array2<f32>> {
    let texts: Vec<&str> = doc.texts.iter().map(String::as_str).collect();
    model.embed_pairs(&texts, doc.embeddings.as_ref().map(|e| e.view()))
}

/// Shift embeddings for many documents, reusing valid records from the
/// archive at `dir` (keyed by the model id) and storing new ones there.
pub fn cached_shift_embeddings<M: ShiftModel + ?Sized>(
    model: &M,
    docs: &[ShiftDoc],
    dir: &Path,
) -> Result<Vec<Array2<f32>>> {
    let mut archive = EmbeddingArchive::open_or_create(dir, &model.model_id(), model.shift_embedding_dim())?;
    let mut out = Vec::with_capacity(docs.len());
    for doc in docs {
        if archive.is_valid(&doc.doc_id, doc.pairs()) {
            out.push(archive.read(&doc.doc_id)?);
            continue;
        }
        let m = shift_embeddings(model, doc)?;
        archive.write(&doc.doc_id, &m)?;
        out.push(m);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_all_zero_predictions() {
        let gold = [0, 1, 0, 0, 1];
        let perfect = shift_report(&gold, &gold).unwrap();
        assert_eq!(perfect.f1(SHIFT), Some(1.0));
        assert_eq!(perfect.macro_f1, 1.0);
        let zeros = shift_report(&[0; 5], &gold).unwrap();
        assert_eq!(zeros.f1(SHIFT), Some(0.0));
    }

    fn doc(id: &str, labels: &[crate::corpus::MainLabel]) -> crate::corpus::DocumentRecord {
        let mut d = crate::corpus::DocumentRecord {
            doc_id: id.into(),
            domain: crate::corpus::Domain::It,
            sentences: Vec::new(),
        };
        for (i, l) in labels.iter().enumerate() {
            let mut s = crate::corpus::SentenceRecord::new(i, format!("sentence {id} {i}"));
            s.gold_main = Some(*l);
            d.sentences.push(s);
        }
        d
    }

    #[test]
    fn positive_rate_complements_same_label_fraction() {
        use crate::corpus::MainLabel::*;
        let docs = vec![doc("a", &[Fac, Fac, Arg, Arg, Rpc]), doc("b", &[Sta]), doc("c", &[Pre, Pre, Pre])];
        let pairs = build_shift_dataset(&docs).unwrap();
        assert_eq!(pairs.len(), 4 + 2);
        let same = crate::corpus::shift_statistic(&docs).pooled_same_fraction.unwrap();
        assert_eq!(positive_rate(&pairs) + same, 1.0);
    }

    #[test]
    fn cache_roundtrips_bit_exactly() {
        use crate::corpus::MainLabel::*;
        let model = SiameseShift::new("enc", 3, 9).unwrap();
        let docs: Vec<ShiftDoc> = [doc("a", &[Fac, Arg, Arg, Rpc]), doc("b", &[Sta])]
            .iter()
            .map(|d| {
                let e = Array2::from_shape_fn((d.len(), 3), |(i, j)| (i as f32 - j as f32) * 0.3);
                ShiftDoc::from_record(d, Some(e))
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let first = cached_shift_embeddings(&model, &docs, dir.path()).unwrap();
        assert_eq!(first[0].nrows(), 3);
        assert_eq!(first[1].nrows(), 0);
        let archive = EmbeddingArchive::open(dir.path()).unwrap();
        assert_eq!(archive.encoder_id(), model.model_id());
        assert_eq!(archive.read("a").unwrap(), first[0]);
        let again = cached_shift_embeddings(&model, &docs, dir.path()).unwrap();
        assert_eq!(again, first);
    }

    #[test]
    fn schedule_rejects_bad_values() {
        let mut s = ShiftSchedule::pair();
        assert!(s.validate().is_ok());
        s.positive_weight = Some(0.0);
        assert!(s.validate().is_err());
        s.positive_weight = None;
        s.batch_size = 0;
        assert!(s.validate().is_err());
    }
}
