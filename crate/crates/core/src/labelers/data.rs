//! Turning documents and embeddings into training examples.

use std::collections::BTreeMap;

use ndarray::Array2;
use rayon::prelude::*;

use super::model::DocInput;
use super::train::TrainExample;
use crate::corpus::DocumentRecord;
use crate::encoders::{EmbeddingArchive, SentenceEncoder};
use crate::{Error, Result};

/// Gold label indices of a document.
pub fn gold_indices(doc: &DocumentRecord) -> Result<Vec<usize>> {
    Ok(doc.main_labels()?.into_iter().map(|l| l.index()).collect())
}

/// Encodes every document with `encoder` (in parallel).
pub fn encode_documents<E: SentenceEncoder + ?Sized>(
    encoder: &E,
    docs: &[DocumentRecord],
) -> Result<BTreeMap<String, Array2<f32>>> {
    docs.par_iter()
        .map(|d| Ok((d.doc_id.clone(), encoder.encode(&d.texts())?)))
        .collect()
}

/// Reads every document's rows from an archive, checking row counts.
pub fn archive_embeddings(
    archive: &EmbeddingArchive,
    docs: &[DocumentRecord],
) -> Result<BTreeMap<String, Array2<f32>>> {
    docs.iter()
        .map(|d| {
            let m = archive.read(&d.doc_id)?;
            if m.nrows() != d.len() {
                return Err(Error::LengthMismatch {
                    left: d.len(),
                    right: m.nrows(),
                });
            }
            Ok((d.doc_id.clone(), m))
        })
        .collect()
}

fn lookup<'a>(map: &'a BTreeMap<String, Array2<f32>>, doc: &DocumentRecord) -> Result<&'a Array2<f32>> {
    map.get(&doc.doc_id)
        .ok_or_else(|| Error::InvalidInput(format!("no embeddings for {}", doc.doc_id)))
}

/// Labelled examples whose role inputs come from `rr` and, when given,
/// shift-component inputs from `shift`.
pub fn build_examples(
    docs: &[DocumentRecord],
    rr: &BTreeMap<String, Array2<f32>>,
    shift: Option<&BTreeMap<String, Array2<f32>>>,
) -> Result<Vec<TrainExample>> {
    docs.iter()
        .map(|d| {
            let x = lookup(rr, d)?.clone();
            let input = match shift {
                Some(s) => DocInput::with_shift(x, lookup(s, d)?.clone()),
                None => DocInput::new(x),
            };
            Ok(TrainExample::new(d.doc_id.clone(), input, gold_indices(d)?))
        })
        .collect()
}
