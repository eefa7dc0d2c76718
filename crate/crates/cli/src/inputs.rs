//! Turning documents into model inputs according to a stored recipe.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use rrseg::corpus::DocumentRecord;
use rrseg::distill::UnlabeledDoc;
use rrseg::encoders::{encode_corpus, SentenceEncoder};
use rrseg::labelers::{compose_lsp_input, gold_indices, DocInput, EncoderIds, TrainExample, Variant};
use rrseg::lsp::{cached_shift_embeddings, PairShift, ShiftDoc, ShiftModel, SiameseShift};
use rrseg::util::sha256_hex;

use crate::config::EncoderSpec;
use crate::error::CliError;

/// How a run builds its inputs. Stored next to checkpoints so evaluation
/// and distillation rebuild exactly the same features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputRecipe {
    pub variant: Variant,
    /// Sentence encoder of the role component.
    pub encoder: EncoderSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_model: Option<PathBuf>,
    /// Frozen encoder feeding a siamese shift model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_encoder: Option<EncoderSpec>,
}

impl InputRecipe {
    pub fn read(run_dir: &Path) -> Result<Self> {
        Ok(rrseg::util::read_json(&run_dir.join("inputs.json"))?)
    }

    pub fn write(&self, run_dir: &Path) -> Result<()> {
        Ok(rrseg::util::write_json(&run_dir.join("inputs.json"), self)?)
    }
}

/// Reads a shift model directory of either kind.
pub fn load_shift_model(dir: &Path) -> Result<Box<dyn ShiftModel>> {
    let meta: serde_json::Value = rrseg::util::read_json(&dir.join("shift_model.json"))?;
    match meta.get("kind").and_then(|k| k.as_str()) {
        Some("siamese") => Ok(Box::new(SiameseShift::load(dir)?)),
        Some("pair") => Ok(Box::new(PairShift::load(dir)?)),
        other => Err(CliError::Config(format!("{}: unknown shift model kind {other:?}", dir.display())).into()),
    }
}

struct ShiftParts {
    model: Box<dyn ShiftModel>,
    /// Present for siamese models.
    encoder: Option<Box<dyn SentenceEncoder>>,
}

pub struct InputBuilder {
    recipe: InputRecipe,
    rr: Box<dyn SentenceEncoder>,
    shift: Option<ShiftParts>,
    cache_dir: PathBuf,
}

impl InputBuilder {
    pub fn new(recipe: InputRecipe, cache_dir: &Path) -> Result<Self> {
        let rr = recipe.encoder.build().context("building the sentence encoder")?;
        let shift = match &recipe.shift_model {
            None => {
                if recipe.variant == Variant::LspBilstmCrf {
                    return Err(CliError::Config("the lsp_bilstm_crf variant needs --shift-model".into()).into());
                }
                None
            }
            Some(dir) => {
                let model = load_shift_model(dir)?;
                let encoder = if model.model_id().starts_with("siamese:") {
                    let spec = recipe.shift_encoder.as_ref().ok_or_else(|| {
                        CliError::Config("a siamese shift model needs --shift-encoder".into())
                    })?;
                    let enc = spec.build()?;
                    let expected = SiameseShift::load(dir)?.encoder_id().to_string();
                    if enc.encoder_id() != expected {
                        return Err(CliError::Config(format!(
                            "shift model was trained on {expected}, --shift-encoder gives {}",
                            enc.encoder_id()
                        ))
                        .into());
                    }
                    Some(enc)
                } else {
                    None
                };
                Some(ShiftParts { model, encoder })
            }
        };
        Ok(Self {
            recipe,
            rr,
            shift,
            cache_dir: cache_dir.to_path_buf(),
        })
    }

    pub fn recipe(&self) -> &InputRecipe {
        &self.recipe
    }

    pub fn encoder_ids(&self) -> EncoderIds {
        EncoderIds {
            rr: self.rr.encoder_id(),
            shift: self.shift.as_ref().map(|s| s.model.model_id()),
        }
    }

    /// Width of the role-component input.
    pub fn rr_dim(&self) -> usize {
        match (&self.shift, self.recipe.variant) {
            (Some(s), Variant::LspBilstmCrf) => self.rr.dim() + 2 * s.model.shift_embedding_dim(),
            _ => self.rr.dim(),
        }
    }

    /// Width of the shift-component input of the joint model.
    pub fn shift_dim(&self) -> Option<usize> {
        (self.recipe.variant == Variant::Mtl).then(|| match &self.shift {
            Some(s) => self.rr.dim() + 2 * s.model.shift_embedding_dim(),
            None => self.rr.dim(),
        })
    }

    /// The width of one shift vector inside composed inputs.
    pub fn shift_embedding_dim(&self) -> Option<usize> {
        self.shift.as_ref().map(|s| s.model.shift_embedding_dim())
    }

    fn cache(&self, kind: &str, id: &str) -> PathBuf {
        self.cache_dir.join(kind).join(&sha256_hex(id.as_bytes())[..16])
    }

    fn sentence_embeddings(
        &self,
        encoder: &dyn SentenceEncoder,
        docs: &[DocumentRecord],
    ) -> Result<BTreeMap<String, Array2<f32>>> {
        let (archive, stats) = encode_corpus(encoder, docs, &self.cache("emb", &encoder.encoder_id()))?;
        log::debug!("{}: {} encoded, {} cached", encoder.encoder_id(), stats.encoded, stats.skipped);
        Ok(rrseg::labelers::archive_embeddings(&archive, docs)?)
    }

    /// Model inputs for each document, in order.
    pub fn inputs(&self, docs: &[DocumentRecord]) -> Result<Vec<DocInput>> {
        let rr = self.sentence_embeddings(self.rr.as_ref(), docs)?;
        let shift_embs = match &self.shift {
            None => None,
            Some(parts) => {
                let frozen = match &parts.encoder {
                    Some(enc) => Some(self.sentence_embeddings(enc.as_ref(), docs)?),
                    None => None,
                };
                let shift_docs: Vec<ShiftDoc> = docs
                    .iter()
                    .map(|d| ShiftDoc::from_record(d, frozen.as_ref().map(|f| f[&d.doc_id].clone())))
                    .collect();
                let dir = self.cache("shift", &parts.model.model_id());
                Some(cached_shift_embeddings(&parts.model, &shift_docs, &dir)?)
            }
        };
        docs.iter()
            .enumerate()
            .map(|(i, d)| {
                let x = rr[&d.doc_id].clone();
                let composed = match &shift_embs {
                    Some(s) => Some(compose_lsp_input(x.view(), s[i].view())?),
                    None => None,
                };
                Ok(match (self.recipe.variant, composed) {
                    (Variant::LspBilstmCrf, Some(c)) => DocInput::new(c),
                    (Variant::Mtl, Some(c)) => DocInput::with_shift(x, c),
                    (Variant::Mtl, None) => DocInput::with_shift(x.clone(), x),
                    (_, _) => DocInput::new(x),
                })
            })
            .collect()
    }

    /// Inputs paired with gold labels.
    pub fn examples(&self, docs: &[DocumentRecord]) -> Result<Vec<TrainExample>> {
        let inputs = self.inputs(docs)?;
        docs.iter()
            .zip(inputs)
            .map(|(d, input)| Ok(TrainExample::new(d.doc_id.clone(), input, gold_indices(d)?)))
            .collect()
    }

    pub fn unlabeled(&self, docs: &[DocumentRecord]) -> Result<Vec<UnlabeledDoc>> {
        let inputs = self.inputs(docs)?;
        Ok(docs
            .iter()
            .zip(inputs)
            .map(|(d, input)| UnlabeledDoc {
                doc_id: d.doc_id.clone(),
                input,
            })
            .collect())
    }
}
