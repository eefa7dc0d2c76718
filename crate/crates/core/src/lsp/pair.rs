use std::path::Path;

use ndarray::{s, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ShiftModel, ShiftPair, ShiftSchedule};
use crate::encoders::{SentenceEncoder, TokenEncoder, CLS, SEP};
use crate::nn::{
    log_softmax_rows, read_weights, softmax_cross_entropy, write_weights, Adam, Grads, Linear,
    ParamStore,
};
use crate::util::{f32_bytes, sha256_hex};
use crate::{Error, Result};

/// Shift classifier that fine-tunes a token encoder on the joint pair
/// `[CLS] a [SEP] b [SEP]`.
///
/// Each segment is pooled separately; the head reads
/// `[h_a, h_b, h_a - h_b, h_a * h_b]` through a tanh layer of the encoder
/// width, whose output is the shift embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct PairShift {
    encoder: TokenEncoder,
    head: ParamStore,
    pooler: Linear,
    out: Linear,
    /// Mean training loss of every optimiser step.
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PairMeta {
    kind: String,
    dim: usize,
    weights_sha256: String,
}

struct Batch {
    segments: Vec<(Vec<usize>, Vec<usize>)>,
    ha: Array2<f32>,
    hb: Array2<f32>,
    features: Array2<f32>,
    pooled: Array2<f32>,
    logits: Array2<f32>,
}

impl PairShift {
    pub fn new(encoder: TokenEncoder, seed: u64) -> Self {
        let d = encoder.config().dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut head = ParamStore::new();
        let pooler = Linear::new(&mut head, "pair.pooler", 4 * d, d, &mut rng);
        let out = Linear::new(&mut head, "pair.out", d, 2, &mut rng);
        Self {
            encoder,
            head,
            pooler,
            out,
            loss_trace: Vec::new(),
        }
    }

    pub fn encoder(&self) -> &TokenEncoder {
        &self.encoder
    }

    /// Token ids of the two segments, truncated longest-first so that the
    /// whole pair fits the encoder's maximum length. The flag reports
    /// truncation.
    pub fn segments(&self, a: &str, b: &str) -> ((Vec<usize>, Vec<usize>), bool) {
        let mut wa = self.encoder.word_ids(a);
        let mut wb = self.encoder.word_ids(b);
        let budget = self.encoder.config().max_len.saturating_sub(3);
        let truncated = wa.len() + wb.len() > budget;
        while wa.len() + wb.len() > budget {
            if wa.len() >= wb.len() {
                wa.pop();
            } else {
                wb.pop();
            }
        }
        let mut sa = vec![CLS];
        sa.extend(wa);
        sa.push(SEP);
        let mut sb = wb;
        sb.push(SEP);
        ((sa, sb), truncated)
    }

    fn forward(&self, pairs: &[(&str, &str)]) -> Batch {
        let d = self.encoder.config().dim;
        let n = pairs.len();
        let mut truncated = 0;
        let mut segments = Vec::with_capacity(n);
        let mut ha = Array2::<f32>::zeros((n, d));
        let mut hb = Array2::<f32>::zeros((n, d));
        for (r, (a, b)) in pairs.iter().enumerate() {
            let (seg, t) = self.segments(a, b);
            truncated += usize::from(t);
            ha.row_mut(r).assign(&self.encoder.bag(&seg.0));
            hb.row_mut(r).assign(&self.encoder.bag(&seg.1));
            segments.push(seg);
        }
        if truncated > 0 {
            log::warn!(
                "{truncated} of {n} sentence pairs exceed {} tokens and were truncated",
                self.encoder.config().max_len
            );
        }
        let mut features = Array2::<f32>::zeros((n, 4 * d));
        features.slice_mut(s![.., ..d]).assign(&ha);
        features.slice_mut(s![.., d..2 * d]).assign(&hb);
        features.slice_mut(s![.., 2 * d..3 * d]).assign(&(&ha - &hb));
        features.slice_mut(s![.., 3 * d..]).assign(&(&ha * &hb));
        let pooled = self.pooler.forward(&self.head, features.view()).mapv(f32::tanh);
        let logits = self.out.forward(&self.head, pooled.view());
        Batch {
            segments,
            ha,
            hb,
            features,
            pooled,
            logits,
        }
    }

    fn loss_and_grad(
        &self,
        pairs: &[(&str, &str)],
        targets: &[usize],
        weights: &[f64],
        enc_grads: &mut Grads,
        head_grads: &mut Grads,
    ) -> f64 {
        let d = self.encoder.config().dim;
        let f = self.forward(pairs);
        let total: f64 = weights.iter().sum();
        let (sum, d_logits) = softmax_cross_entropy(f.logits.view(), targets, Some(weights));
        let d_logits = d_logits / total as f32;
        let d_pooled = self.out.backward(&self.head, head_grads, f.pooled.view(), d_logits.view());
        let d_z = d_pooled * f.pooled.mapv(|p| 1.0 - p * p);
        let d_feat = self.pooler.backward(&self.head, head_grads, f.features.view(), d_z.view());
        let d1 = d_feat.slice(s![.., ..d]);
        let d2 = d_feat.slice(s![.., d..2 * d]);
        let d3 = d_feat.slice(s![.., 2 * d..3 * d]);
        let d4 = d_feat.slice(s![.., 3 * d..]);
        let d_ha = &d1 + &d3 + &d4 * &f.hb;
        let d_hb = &d2 - &d3 + &d4 * &f.ha;
        for (r, (sa, sb)) in f.segments.iter().enumerate() {
            self.encoder.bag_backward(enc_grads, sa, d_ha.row(r));
            self.encoder.bag_backward(enc_grads, sb, d_hb.row(r));
        }
        sum / total
    }

    /// Fine-tunes encoder and head end to end.
    pub fn fit(&mut self, pairs: &[ShiftPair], schedule: &ShiftSchedule) -> Result<()> {
        schedule.validate()?;
        if pairs.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let mut enc_adam = Adam::new(self.encoder.params(), schedule.learning_rate);
        let mut head_adam = Adam::new(&self.head, schedule.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x0009_a15c);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        for epoch in 0..schedule.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(schedule.batch_size) {
                let texts: Vec<(&str, &str)> = batch
                    .iter()
                    .map(|&i| (pairs[i].text_a.as_str(), pairs[i].text_b.as_str()))
                    .collect();
                let targets: Vec<usize> = batch.iter().map(|&i| pairs[i].label as usize).collect();
                let weights: Vec<f64> = batch.iter().map(|&i| schedule.weight(pairs[i].label)).collect();
                let mut eg = Grads::zeros_like(self.encoder.params());
                let mut hg = Grads::zeros_like(&self.head);
                let loss = self.loss_and_grad(&texts, &targets, &weights, &mut eg, &mut hg);
                if let Some(c) = schedule.grad_clip {
                    clip_joint(&mut eg, &mut hg, c);
                }
                if !eg.is_finite() || !hg.is_finite() {
                    return Err(Error::NonFinite(format!("pair-model gradient in epoch {epoch}")));
                }
                enc_adam.step(self.encoder.params_mut(), &eg);
                head_adam.step(&mut self.head, &hg);
                self.loss_trace.push(loss);
                epoch_loss += loss * batch.len() as f64;
            }
            log::info!("pair shift epoch {epoch}: loss {:.5}", epoch_loss / pairs.len() as f64);
        }
        self.encoder.push_lineage(format!(
            "pair-shift:{} pairs,{} epochs,lr {},seed {}",
            pairs.len(),
            schedule.epochs,
            schedule.learning_rate,
            schedule.seed
        ));
        Ok(())
    }

    fn doc_pairs<'a>(texts: &[&'a str]) -> Vec<(&'a str, &'a str)> {
        texts.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.encoder.save(&dir.join("encoder"))?;
        let blob = write_weights(&dir.join("head.bin"), self.head.data())?;
        let meta = PairMeta {
            kind: "pair".into(),
            dim: self.encoder.config().dim,
            weights_sha256: sha256_hex(&blob),
        };
        crate::util::write_json(&dir.join("shift_model.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: PairMeta = crate::util::read_json(&dir.join("shift_model.json"))?;
        if meta.kind != "pair" {
            return Err(Error::InvalidConfig(format!("{} does not hold a pair shift model", dir.display())));
        }
        let encoder = TokenEncoder::load(&dir.join("encoder"))?;
        if encoder.config().dim != meta.dim {
            return Err(Error::DimensionMismatch {
                context: format!("pair shift model in {}", dir.display()),
                expected: meta.dim,
                actual: encoder.config().dim,
            });
        }
        let values = read_weights(&dir.join("head.bin"), Some(&meta.weights_sha256))?;
        let mut model = Self::new(encoder, 0);
        model.head.load_values(&values)?;
        Ok(model)
    }
}

/// Clips the combined norm of encoder and head gradients.
fn clip_joint(a: &mut Grads, b: &mut Grads, max_norm: f32) {
    let norm = (a.norm().powi(2) + b.norm().powi(2)).sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        a.scale(s);
        b.scale(s);
    }
}

impl ShiftModel for PairShift {
    fn model_id(&self) -> String {
        let mut bytes = self.encoder.encoder_id().into_bytes();
        bytes.extend(f32_bytes(self.head.data()));
        format!("pair:{}", &sha256_hex(&bytes)[..16])
    }

    fn shift_embedding_dim(&self) -> usize {
        self.encoder.config().dim
    }

    fn embed_pairs(&self, texts: &[&str], _: Option<ArrayView2<f32>>) -> Result<Array2<f32>> {
        Ok(self.forward(&Self::doc_pairs(texts)).pooled)
    }

    fn shift_probabilities(&self, texts: &[&str], _: Option<ArrayView2<f32>>) -> Result<Vec<f32>> {
        let f = self.forward(&Self::doc_pairs(texts));
        let logp = log_softmax_rows(f.logits.view());
        Ok(logp.column(1).iter().map(|v| v.exp() as f32).collect())
    }
}

/// Fine-tunes `encoder` with a fresh head on the shift pairs.
pub fn train_pair_shift(encoder: TokenEncoder, pairs: &[ShiftPair], schedule: &ShiftSchedule) -> Result<PairShift> {
    let mut model = PairShift::new(encoder, schedule.seed);
    model.fit(pairs, schedule)?;
    Ok(model)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::TokenEncoderConfig;

    fn small_encoder(max_len: usize) -> TokenEncoder {
        TokenEncoder::new(TokenEncoderConfig {
            dim: 16,
            buckets: 257,
            max_len,
            seed: 4,
            ..Default::default()
        })
        .unwrap()
    }

    fn toy_pairs() -> Vec<ShiftPair> {
        (0..40)
            .map(|i| {
                let shift = i % 4 == 0;
                ShiftPair {
                    doc_id: format!("d{}", i / 10),
                    i: i % 10,
                    text_a: format!("facts were stated {}", i % 3),
                    text_b: if shift {
                        "the appeal is dismissed".to_string()
                    } else {
                        format!("facts were recorded {}", i % 5)
                    },
                    label: u8::from(shift),
                }
            })
            .collect()
    }

    #[test]
    fn truncation_keeps_pairs_within_max_len() {
        let m = PairShift::new(small_encoder(8), 0);
        let ((a, b), truncated) = m.segments("one two three four five six", "seven eight");
        assert!(truncated);
        assert_eq!(a.len() + b.len(), 8);
        assert_eq!((a[0], *a.last().unwrap(), *b.last().unwrap()), (CLS, SEP, SEP));
        let (_, short) = m.segments("one", "two");
        assert!(!short);
    }

    #[test]
    fn first_epoch_loss_trace_is_reproducible() {
        let mut schedule = ShiftSchedule::pair();
        schedule.epochs = 1;
        schedule.learning_rate = 1e-2;
        schedule.batch_size = 8;
        let a = train_pair_shift(small_encoder(64), &toy_pairs(), &schedule).unwrap();
        let b = train_pair_shift(small_encoder(64), &toy_pairs(), &schedule).unwrap();
        assert_eq!(a.loss_trace, b.loss_trace);
        assert_eq!(a.model_id(), b.model_id());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = PairShift::new(small_encoder(64), 2);
        let pairs = [("a b c", "d e"), ("x y", "x y z")];
        let targets = [1, 0];
        let weights = [1.0, 1.0];
        let mut eg = Grads::zeros_like(m.encoder.params());
        let mut hg = Grads::zeros_like(&m.head);
        m.loss_and_grad(&pairs, &targets, &weights, &mut eg, &mut hg);
        let loss = |m: &PairShift| {
            m.loss_and_grad(
                &pairs,
                &targets,
                &weights,
                &mut Grads::zeros_like(m.encoder.params()),
                &mut Grads::zeros_like(&m.head),
            )
        };
        let eps = 1e-2f32;
        let ids = m.segments("a b c", "d e").0 .0;
        for &k in &[0usize, 33, 100, m.head.len() - 1] {
            let mut p = m.clone();
            p.head.data_mut()[k] += eps;
            let up = loss(&p);
            p.head.data_mut()[k] -= 2.0 * eps;
            let numeric = (up - loss(&p)) / (2.0 * eps as f64);
            let analytic = hg.data()[k] as f64;
            assert!((numeric - analytic).abs() < 1e-3 + 1e-2 * analytic.abs(), "head {k}");
        }
        for &id in &ids[1..3] {
            let k = id * 16 + 5;
            let mut p = m.clone();
            p.encoder.params_mut().data_mut()[k] += eps;
            let up = loss(&p);
            p.encoder.params_mut().data_mut()[k] -= 2.0 * eps;
            let numeric = (up - loss(&p)) / (2.0 * eps as f64);
            let analytic = eg.data()[k] as f64;
            assert!((numeric - analytic).abs() < 1e-3 + 1e-2 * analytic.abs(), "emb {k}: {numeric} {analytic}");
        }
    }

    #[test]
    fn learns_toy_task_and_roundtrips() {
        let mut schedule = ShiftSchedule::pair();
        schedule.epochs = 15;
        schedule.learning_rate = 1e-2;
        schedule.batch_size = 8;
        let model = train_pair_shift(small_encoder(64), &toy_pairs(), &schedule).unwrap();
        let docs: Vec<super::super::ShiftDoc> = vec![super::super::ShiftDoc {
            doc_id: "t".into(),
            texts: vec!["facts were stated 1".into(), "facts were recorded 2".into(), "the appeal is dismissed".into()],
            embeddings: None,
            labels: Some(vec![0, 1]),
        }];
        let report = super::super::eval_shift(&model, &docs).unwrap();
        assert_eq!(report.macro_f1, 1.0);
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = PairShift::load(dir.path()).unwrap();
        assert_eq!(back.model_id(), model.model_id());
        let e = super::super::shift_embeddings(&back, &docs[0]).unwrap();
        assert_eq!(e.dim(), (2, 16));
    }
}
