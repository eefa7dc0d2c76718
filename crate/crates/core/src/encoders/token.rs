//! A small trainable sentence encoder over hashed word pieces.
//!
//! Sentences become `[CLS] w1 ... wk` token-id sequences (at most `max_len`
//! ids, longer inputs truncated). The sequence representation is the mean of
//! the token embeddings; the classification-token pooling passes it through
//! a tanh layer, mean pooling returns it unchanged. The encoder can be
//! adapted to a domain with a masked-token objective whose output layer is
//! tied to the embedding table.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SentenceEncoder;
use crate::corpus::{CorpusSplit, DocumentRecord, Part};
use crate::nn::{read_weights, write_weights, Adam, Grads, Init, Linear, ParamId, ParamStore};
use crate::util::{fnv1a, sha256_hex, word_tokens};
use crate::{Error, Result};

pub const CLS: usize = 0;
pub const SEP: usize = 1;
pub const MASK: usize = 2;
const RESERVED: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// tanh layer over the sequence representation.
    #[default]
    Cls,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEncoderConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Size of the hashed vocabulary, including three reserved ids.
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub seed: u64,
}

fn default_dim() -> usize {
    768
}
fn default_buckets() -> usize {
    8192
}
fn default_max_len() -> usize {
    256
}

impl Default for TokenEncoderConfig {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            buckets: default_buckets(),
            max_len: default_max_len(),
            pooling: Pooling::Cls,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct TokenEncoder {
    config: TokenEncoderConfig,
    store: ParamStore,
    emb: ParamId,
    pooler: Linear,
    lineage: Vec<String>,
    id: OnceLock<String>,
}

impl Clone for TokenEncoder {
    fn clone(&self) -> Self {
        Self {
            config: self.config.clone(),
            store: self.store.clone(),
            emb: self.emb,
            pooler: self.pooler,
            lineage: self.lineage.clone(),
            id: OnceLock::new(),
        }
    }
}

impl PartialEq for TokenEncoder {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.store == other.store && self.lineage == other.lineage
    }
}

#[derive(Serialize, Deserialize)]
struct EncoderMeta {
    config: TokenEncoderConfig,
    lineage: Vec<String>,
    weights_sha256: String,
}

impl TokenEncoder {
    pub fn new(config: TokenEncoderConfig) -> Result<Self> {
        if config.dim == 0 || config.buckets <= RESERVED || config.max_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "token encoder needs dim > 0, buckets > {RESERVED}, max_len >= 2: {config:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let emb = store.add("emb", config.buckets, config.dim, Init::Uniform(0.1), &mut rng);
        let pooler = Linear::new(&mut store, "pooler", config.dim, config.dim, &mut rng);
        Ok(Self {
            config,
            store,
            emb,
            pooler,
            lineage: Vec::new(),
            id: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &TokenEncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Mutable weights; the encoder id is recomputed afterwards.
    pub fn params_mut(&mut self) -> &mut ParamStore {
        self.id = OnceLock::new();
        &mut self.store
    }

    /// Records a training step in the provenance used by the encoder id.
    pub fn push_lineage(&mut self, entry: impl Into<String>) {
        self.id = OnceLock::new();
        self.lineage.push(entry.into());
    }

    pub fn lineage(&self) -> &[String] {
        &self.lineage
    }

    pub fn token_id(&self, token: &str) -> usize {
        RESERVED + (fnv1a(token.as_bytes()) % (self.config.buckets - RESERVED) as u64) as usize
    }

    /// Word-piece ids without the leading classification token.
    pub fn word_ids(&self, text: &str) -> Vec<usize> {
        word_tokens(text).iter().map(|t| self.token_id(t)).collect()
    }

    /// `[CLS] ids...` truncated to `max_len`; the flag reports truncation.
    pub fn sequence(&self, text: &str) -> (Vec<usize>, bool) {
        let mut ids = vec![CLS];
        ids.extend(self.word_ids(text));
        let truncated = ids.len() > self.config.max_len;
        ids.truncate(self.config.max_len);
        (ids, truncated)
    }

    /// Mean embedding of a token-id sequence.
    pub fn bag(&self, ids: &[usize]) -> Array1<f32> {
        let e = self.store.view(self.emb);
        let mut h = Array1::<f32>::zeros(self.config.dim);
        for &id in ids {
            h += &e.row(id);
        }
        if !ids.is_empty() {
            h /= ids.len() as f32;
        }
        h
    }

    pub fn bag_backward(&self, grads: &mut Grads, ids: &[usize], d_h: ArrayView1<f32>) {
        if ids.is_empty() {
            return;
        }
        let scaled = &d_h / ids.len() as f32;
        let mut g = grads.view_mut(self.emb);
        for &id in ids {
            let mut row = g.row_mut(id);
            row += &scaled;
        }
    }

    pub fn pool(&self, h: ArrayView1<f32>) -> Array1<f32> {
        match self.config.pooling {
            Pooling::Mean => h.to_owned(),
            Pooling::Cls => self
                .pooler
                .forward(&self.store, h.insert_axis(Axis(0)))
                .row(0)
                .mapv(f32::tanh),
        }
    }

    /// Returns `dL/dh` given `dL/dpooled`.
    pub fn pool_backward(
        &self,
        grads: &mut Grads,
        h: ArrayView1<f32>,
        pooled: ArrayView1<f32>,
        d_pooled: ArrayView1<f32>,
    ) -> Array1<f32> {
        match self.config.pooling {
            Pooling::Mean => d_pooled.to_owned(),
            Pooling::Cls => {
                let d_z = &d_pooled * &pooled.mapv(|p| 1.0 - p * p);
                self.pooler
                    .backward(&self.store, grads, h.insert_axis(Axis(0)), d_z.view().insert_axis(Axis(0)))
                    .row(0)
                    .to_owned()
            }
        }
    }

    pub fn embed(&self, text: &str) -> Array1<f32> {
        let (ids, truncated) = self.sequence(text);
        if truncated {
            log::debug!("sentence truncated to {} tokens", self.config.max_len);
        }
        self.pool(self.bag(&ids).view())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blob = write_weights(&dir.join("weights.bin"), self.store.data())?;
        let meta = EncoderMeta {
            config: self.config.clone(),
            lineage: self.lineage.clone(),
            weights_sha256: sha256_hex(&blob),
        };
        crate::util::write_json(&dir.join("encoder.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: EncoderMeta = crate::util::read_json(&dir.join("encoder.json"))?;
        let values = read_weights(&dir.join("weights.bin"), Some(&meta.weights_sha256))?;
        let mut enc = Self::new(meta.config)?;
        enc.store.load_values(&values)?;
        enc.lineage = meta.lineage;
        Ok(enc)
    }
}

impl SentenceEncoder for TokenEncoder {
    fn encoder_id(&self) -> String {
        self.id
            .get_or_init(|| {
                let mut bytes = serde_json::to_vec(&self.config).expect("config serializes");
                bytes.extend(crate::util::f32_bytes(self.store.data()));
                for l in &self.lineage {
                    bytes.extend(l.as_bytes());
                }
                format!("token:{}", &sha256_hex(&bytes)[..16])
            })
            .clone()
    }

    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>> {
        let mut out = Array2::<f32>::zeros((sentences.len(), self.config.dim));
        for (i, s) in sentences.iter().enumerate() {
            out.row_mut(i).assign(&self.embed(s));
        }
        Ok(out)
    }
}

/// Masked-token fine-tuning schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlmSchedule {
    pub epochs: usize,
    pub learning_rate: f32,
    pub mask_prob: f64,
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for MlmSchedule {
    fn default() -> Self {
        Self {
            epochs: 1,
            learning_rate: 5e-3,
            mask_prob: 0.15,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Positions to mask: each with probability `p`, at least one.
fn choose_masks(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut masked: Vec<usize> = (0..len).filter(|_| rng.random_bool(p)).collect();
    if masked.is_empty() {
        masked.push(rng.random_range(0..len));
    }
    masked
}

/// Cross-entropy of the masked tokens of one sentence given the
/// bag-of-context representation; accumulates gradients when asked.
fn masked_sentence_loss(
    enc: &TokenEncoder,
    words: &[usize],
    masked: &[usize],
    grads: Option<(&mut Grads, f32)>,
) -> f64 {
    let masked_set: BTreeSet<usize> = masked.iter().copied().collect();
    let mut context = vec![CLS];
    context.extend(
        words
            .iter()
            .enumerate()
            .map(|(i, &w)| if masked_set.contains(&i) { MASK } else { w }),
    );
    let h = enc.bag(&context);
    let e = enc.store.view(enc.emb);
    let logits = e.dot(&h);
    let m = logits.iter().cloned().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = m + logits.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
    let loss: f64 = masked.iter().map(|&p| lse - logits[words[p]] as f64).sum();
    if let Some((grads, scale)) = grads {
        let probs = logits.mapv(|v| ((v as f64 - lse).exp()) as f32);
        let mut d_logits = &probs * masked.len() as f32;
        for &p in masked {
            d_logits[words[p]] -= 1.0;
        }
        d_logits *= scale;
        let d_h = e.t().dot(&d_logits);
        {
            let mut g = grads.view_mut(enc.emb);
            g += &d_logits
                .view()
                .insert_axis(Axis(1))
                .dot(&h.view().insert_axis(Axis(0)));
        }
        enc.bag_backward(grads, &context, d_h.view());
    }
    loss
}

/// Mean masked-token loss over `sentences` with masks drawn from `seed`.
pub fn mlm_loss(encoder: &TokenEncoder, sentences: &[&str], mask_prob: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    let mut count = 0usize;
    for s in sentences {
        let (seq, _) = encoder.sequence(s);
        let words = &seq[1..];
        if words.is_empty() {
            continue;
        }
        let masked = choose_masks(words.len(), mask_prob, &mut rng);
        total += masked_sentence_loss(encoder, words, &masked, None);
        count += masked.len();
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Adapts `base` to the training documents with the masked-token objective.
/// Documents assigned to the validation or test part of `split` are refused.
pub fn finetune_mlm(
    base: &TokenEncoder,
    train_docs: &[DocumentRecord],
    split: &CorpusSplit,
    schedule: &MlmSchedule,
) -> Result<TokenEncoder> {
    let leaked: Vec<String> = train_docs
        .iter()
        .filter(|d| matches!(split.part_of(&d.doc_id), Some(Part::Val | Part::Test)))
        .map(|d| d.doc_id.clone())
        .collect();
    if !leaked.is_empty() {
        return Err(Error::Leakage(leaked));
    }
    let mut enc = base.clone();
    let sentences: Vec<Vec<usize>> = train_docs
        .iter()
        .flat_map(|d| d.sentences.iter())
        .map(|s| enc.sequence(&s.text).0[1..].to_vec())
        .filter(|w| !w.is_empty())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);
    let mut opt = Adam::new(&enc.store, schedule.learning_rate);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_tokens = 0;
        for batch in order.chunks(schedule.batch_size.max(1)) {
            let picks: Vec<(usize, Vec<usize>)> = batch
                .iter()
                .map(|&i| (i, choose_masks(sentences[i].len(), schedule.mask_prob, &mut rng)))
                .collect();
            let tokens: usize = picks.iter().map(|(_, m)| m.len()).sum();
            let mut grads = Grads::zeros_like(&enc.store);
            for (i, masked) in &picks {
                epoch_loss += masked_sentence_loss(
                    &enc,
                    &sentences[*i],
                    masked,
                    Some((&mut grads, 1.0 / tokens as f32)),
                );
            }
            epoch_tokens += tokens;
            opt.step(&mut enc.store, &grads);
        }
        log::info!(
            "mlm epoch {epoch}: loss {:.4}",
            epoch_loss / epoch_tokens.max(1) as f64
        );
    }
    let mut doc_ids: Vec<&str> = train_docs.iter().map(|d| d.doc_id.as_str()).collect();
    doc_ids.sort();
    let corpus_hash = &sha256_hex(doc_ids.join("\n").as_bytes())[..12];
    enc.push_lineage(format!(
        "mlm:{corpus_hash}:epochs={}:lr={}:mask={}:seed={}",
        schedule.epochs, schedule.learning_rate, schedule.mask_prob, schedule.seed
    ));
    Ok(enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{split_corpus, Domain, SentenceRecord, SplitRatios};

    fn small() -> TokenEncoderConfig {
        TokenEncoderConfig {
            dim: 8,
            buckets: 64,
            max_len: 6,
            pooling: Pooling::Cls,
            seed: 1,
        }
    }

    fn docs(n: usize) -> Vec<DocumentRecord> {
        (0..n)
            .map(|d| DocumentRecord {
                doc_id: format!("doc{d}"),
                domain: Domain::It,
                sentences: (0..4)
                    .map(|i| {
                        let text = if i % 2 == 0 {
                            "the assessee filed the return of income"
                        } else {
                            "the appeal is dismissed with costs"
                        };
                        SentenceRecord::new(i, text)
                    })
                    .collect(),
            })
            .collect()
    }

    #[test]
    fn truncation_and_reserved_ids() {
        let enc = TokenEncoder::new(small()).unwrap();
        let (ids, truncated) = enc.sequence("one two three four five six seven");
        assert_eq!(ids.len(), 6);
        assert!(truncated);
        assert_eq!(ids[0], CLS);
        assert!(ids[1..].iter().all(|i| (RESERVED..64).contains(i)));
    }

    #[test]
    fn pooling_gradients() {
        for pooling in [Pooling::Cls, Pooling::Mean] {
            let mut cfg = small();
            cfg.pooling = pooling;
            let mut enc = TokenEncoder::new(cfg).unwrap();
            let ids = enc.sequence("court held appeal").0;
            let probe = Array1::from_shape_fn(8, |i| i as f32 * 0.1 - 0.3);
            let loss = |e: &TokenEncoder| e.pool(e.bag(&ids).view()).dot(&probe) as f64;
            let h = enc.bag(&ids);
            let pooled = enc.pool(h.view());
            let mut g = Grads::zeros_like(enc.params());
            let d_h = enc.pool_backward(&mut g, h.view(), pooled.view(), probe.view());
            enc.bag_backward(&mut g, &ids, d_h.view());
            for k in (0..enc.params().len()).step_by(5) {
                let orig = enc.params().data()[k];
                enc.params_mut().data_mut()[k] = orig + 1e-2;
                let up = loss(&enc);
                enc.params_mut().data_mut()[k] = orig - 1e-2;
                let down = loss(&enc);
                enc.params_mut().data_mut()[k] = orig;
                let num = (up - down) / 2e-2;
                assert!((num - g.data()[k] as f64).abs() < 1e-3, "{pooling:?} {k}");
            }
        }
    }

    #[test]
    fn zero_epochs_keep_embeddings() {
        let base = TokenEncoder::new(small()).unwrap();
        let d = docs(10);
        let split = split_corpus(&d, SplitRatios::default(), 0).unwrap();
        let train: Vec<DocumentRecord> = split.select(&d, Part::Train).into_iter().cloned().collect();
        let schedule = MlmSchedule {
            epochs: 0,
            ..MlmSchedule::default()
        };
        let tuned = finetune_mlm(&base, &train, &split, &schedule).unwrap();
        let s = ["the appeal is dismissed"];
        assert_eq!(tuned.encode(&s).unwrap(), base.encode(&s).unwrap());
        assert_ne!(tuned.encoder_id(), base.encoder_id());
    }

    #[test]
    fn finetuning_lowers_masked_loss() {
        let base = TokenEncoder::new(small()).unwrap();
        let d = docs(10);
        let split = split_corpus(&d, SplitRatios::default(), 0).unwrap();
        let train: Vec<DocumentRecord> = split.select(&d, Part::Train).into_iter().cloned().collect();
        let schedule = MlmSchedule {
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 8,
            ..MlmSchedule::default()
        };
        let tuned = finetune_mlm(&base, &train, &split, &schedule).unwrap();
        let held = ["the assessee filed the return", "the appeal is dismissed"];
        let before = mlm_loss(&base, &held, 0.3, 9);
        let after = mlm_loss(&tuned, &held, 0.3, 9);
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn refuses_held_out_documents() {
        let base = TokenEncoder::new(small()).unwrap();
        let d = docs(10);
        let split = split_corpus(&d, SplitRatios::default(), 0).unwrap();
        let err = finetune_mlm(&base, &d, &split, &MlmSchedule::default()).unwrap_err();
        assert!(matches!(err, Error::Leakage(ids) if ids.len() == 2));
    }

    #[test]
    fn save_load_roundtrip() {
        let enc = TokenEncoder::new(small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        enc.save(dir.path()).unwrap();
        let back = TokenEncoder::load(dir.path()).unwrap();
        assert_eq!(back, enc);
        assert_eq!(back.encoder_id(), enc.encoder_id());
    }
}
