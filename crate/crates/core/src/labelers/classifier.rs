//! Single-sentence role classifiers, optionally reading one neighbour on
//! each side.

use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentRecord, MainLabel};
use crate::encoders::{SentenceEncoder, TokenEncoder, CLS, SEP};
use crate::metrics::{macro_f1, MetricsReport};
use crate::nn::{log_softmax_rows, read_weights, softmax_cross_entropy, write_weights, Adam, Grads, Linear, ParamStore};
use crate::util::sha256_hex;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSchedule {
    #[serde(default = "default_lr")]
    pub learning_rate: f32,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f32 {
    2e-5
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    5
}

impl Default for ClassifierSchedule {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            batch_size: default_batch(),
            epochs: default_epochs(),
            seed: 0,
        }
    }
}

/// Token-id input of sentence `i`. With a window of one the sequence is
/// `[CLS] left [SEP] self [SEP] right`, where a missing neighbour at a
/// document boundary contributes an empty text.
pub fn context_ids(encoder: &TokenEncoder, texts: &[&str], i: usize, window: usize) -> Result<Vec<usize>> {
    match window {
        0 => Ok(encoder.sequence(texts[i]).0),
        1 => {
            let left = if i > 0 { texts[i - 1] } else { "" };
            let right = texts.get(i + 1).copied().unwrap_or("");
            let mut ids = vec![CLS];
            ids.extend(encoder.word_ids(left));
            ids.push(SEP);
            ids.extend(encoder.word_ids(texts[i]));
            ids.push(SEP);
            ids.extend(encoder.word_ids(right));
            ids.truncate(encoder.config().max_len);
            Ok(ids)
        }
        w => Err(Error::Unsupported(format!("neighbour window {w}; only 0 and 1 are supported"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceClassifier {
    encoder: TokenEncoder,
    window: usize,
    head_store: ParamStore,
    head: Linear,
    /// Validation macro F1 after each epoch, when a validation set was given.
    pub val_f1: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ClassifierMeta {
    window: usize,
    weights_sha256: String,
}

impl SentenceClassifier {
    pub fn new(encoder: TokenEncoder, window: usize, seed: u64) -> Result<Self> {
        if window > 1 {
            return Err(Error::Unsupported(format!("neighbour window {window}; only 0 and 1 are supported")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head_store = ParamStore::new();
        let head = Linear::new(&mut head_store, "cls.out", encoder.config().dim, MainLabel::COUNT, &mut rng);
        Ok(Self {
            encoder,
            window,
            head_store,
            head,
            val_f1: Vec::new(),
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn encoder(&self) -> &TokenEncoder {
        &self.encoder
    }

    fn logits(&self, ids: &[usize]) -> (Array1<f32>, Array1<f32>, Array2<f32>) {
        let h = self.encoder.bag(ids);
        let pooled = self.encoder.pool(h.view());
        let logits = self.head.forward(&self.head_store, pooled.view().insert_axis(Axis(0)));
        (h, pooled, logits)
    }

    pub fn predict_doc(&self, texts: &[&str]) -> Result<Vec<MainLabel>> {
        (0..texts.len())
            .map(|i| {
                let ids = context_ids(&self.encoder, texts, i, self.window)?;
                let logp = log_softmax_rows(self.logits(&ids).2.view());
                let row = logp.row(0);
                let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                Ok(MainLabel::from_index(best).expect("head has one output per label"))
            })
            .collect()
    }

    /// Macro F1 over every sentence of labelled documents.
    pub fn evaluate(&self, docs: &[DocumentRecord]) -> Result<MetricsReport> {
        let mut predicted = Vec::new();
        let mut gold = Vec::new();
        for doc in docs {
            gold.extend(doc.main_labels()?);
            predicted.extend(self.predict_doc(&doc.texts())?);
        }
        macro_f1(&predicted, &gold, MainLabel::ALL)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.encoder.save(&dir.join("encoder"))?;
        let blob = write_weights(&dir.join("head.bin"), self.head_store.data())?;
        let meta = ClassifierMeta {
            window: self.window,
            weights_sha256: sha256_hex(&blob),
        };
        crate::util::write_json(&dir.join("classifier.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: ClassifierMeta = crate::util::read_json(&dir.join("classifier.json"))?;
        let encoder = TokenEncoder::load(&dir.join("encoder"))?;
        let values = read_weights(&dir.join("head.bin"), Some(&meta.weights_sha256))?;
        let mut model = Self::new(encoder, meta.window, 0)?;
        model.head_store.load_values(&values)?;
        Ok(model)
    }

    pub fn model_id(&self) -> String {
        let mut bytes = self.encoder.encoder_id().into_bytes();
        bytes.extend(crate::util::f32_bytes(self.head_store.data()));
        bytes.push(self.window as u8);
        format!("sentence-classifier:{}", &sha256_hex(&bytes)[..16])
    }
}

/// Fine-tunes `encoder` with a 7-way head on every sentence of `train`.
pub fn train_sentence_classifier(
    encoder: TokenEncoder,
    train: &[DocumentRecord],
    val: &[DocumentRecord],
    window: usize,
    schedule: &ClassifierSchedule,
) -> Result<SentenceClassifier> {
    let mut model = SentenceClassifier::new(encoder, window, schedule.seed)?;
    if schedule.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be > 0".into()));
    }
    let mut examples: Vec<(Vec<usize>, usize)> = Vec::new();
    for doc in train {
        let labels = doc.main_labels()?;
        let texts = doc.texts();
        for (i, label) in labels.iter().enumerate() {
            examples.push((context_ids(&model.encoder, &texts, i, window)?, label.index()));
        }
    }
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut enc_adam = Adam::new(model.encoder.params(), schedule.learning_rate);
    let mut head_adam = Adam::new(&model.head_store, schedule.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0xc1a55);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..schedule.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(schedule.batch_size) {
            let mut eg = Grads::zeros_like(model.encoder.params());
            let mut hg = Grads::zeros_like(&model.head_store);
            let scale = 1.0 / batch.len() as f32;
            for &k in batch {
                let (ids, label) = &examples[k];
                let (h, pooled, logits) = model.logits(ids);
                let (loss, d_logits) = softmax_cross_entropy(logits.view(), &[*label], None);
                epoch_loss += loss;
                let d_logits = d_logits * scale;
                let d_pooled = model.head.backward(
                    &model.head_store,
                    &mut hg,
                    pooled.view().insert_axis(Axis(0)),
                    d_logits.view(),
                );
                let d_h = model.encoder.pool_backward(&mut eg, h.view(), pooled.view(), d_pooled.row(0));
                model.encoder.bag_backward(&mut eg, ids, d_h.view());
            }
            if !eg.is_finite() || !hg.is_finite() {
                return Err(Error::NonFinite(format!("classifier gradient in epoch {epoch}")));
            }
            enc_adam.step(model.encoder.params_mut(), &eg);
            head_adam.step(&mut model.head_store, &hg);
        }
        if !val.is_empty() {
            let f1 = model.evaluate(val)?.macro_f1;
            model.val_f1.push(f1);
        }
        log::info!("classifier epoch {epoch}: loss {:.4}", epoch_loss / examples.len() as f64);
    }
    model.encoder.push_lineage(format!(
        "sentence-classifier:window {window},{} epochs,lr {}",
        schedule.epochs, schedule.learning_rate
    ));
    Ok(model)
}
