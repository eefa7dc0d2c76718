use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ShiftDoc, ShiftModel, ShiftPair, ShiftSchedule};
use crate::encoders::SentenceEncoder;
use crate::nn::{clip_grad_norm, read_weights, softmax_cross_entropy, write_weights, Adam, Grads, Linear, ParamStore};
use crate::util::{f32_bytes, sha256_hex};
use crate::{Error, Result};

/// Hidden widths of the feed-forward head; the last one is the shift
/// embedding width.
pub const SIAMESE_WIDTHS: [usize; 2] = [512, 128];

/// `[a, b, a - b]`.
pub fn siamese_input(a: ArrayView1<f32>, b: ArrayView1<f32>) -> Array1<f32> {
    let d = a.len();
    let mut x = Array1::<f32>::zeros(3 * d);
    x.slice_mut(s![..d]).assign(&a);
    x.slice_mut(s![d..2 * d]).assign(&b);
    x.slice_mut(s![2 * d..]).assign(&(&a - &b));
    x
}

/// Shift classifier over frozen sentence embeddings of the two sentences.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseShift {
    encoder_id: String,
    input_dim: usize,
    store: ParamStore,
    layers: [Linear; 3],
    /// Mean training loss of every optimiser step.
    pub loss_trace: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SiameseMeta {
    kind: String,
    encoder_id: String,
    input_dim: usize,
    widths: [usize; 2],
    weights_sha256: String,
}

struct Forward {
    z1: Array2<f32>,
    h1: Array2<f32>,
    z2: Array2<f32>,
    h2: Array2<f32>,
    logits: Array2<f32>,
}

fn relu(z: &Array2<f32>) -> Array2<f32> {
    z.mapv(|v| v.max(0.0))
}

fn relu_backward(z: &Array2<f32>, d: Array2<f32>) -> Array2<f32> {
    let mut d = d;
    d.zip_mut_with(z, |g, &v| {
        if v <= 0.0 {
            *g = 0.0
        }
    });
    d
}

impl SiameseShift {
    pub fn new(encoder_id: impl Into<String>, input_dim: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidConfig("siamese shift model needs input_dim > 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let [h1, h2] = SIAMESE_WIDTHS;
        let layers = [
            Linear::new(&mut store, "siamese.l1", 3 * input_dim, h1, &mut rng),
            Linear::new(&mut store, "siamese.l2", h1, h2, &mut rng),
            Linear::new(&mut store, "siamese.out", h2, 2, &mut rng),
        ];
        Ok(Self {
            encoder_id: encoder_id.into(),
            input_dim,
            store,
            layers,
            loss_trace: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Id of the sentence encoder whose vectors the model reads.
    pub fn encoder_id(&self) -> &str {
        &self.encoder_id
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    fn forward(&self, x: ArrayView2<f32>) -> Forward {
        let z1 = self.layers[0].forward(&self.store, x);
        let h1 = relu(&z1);
        let z2 = self.layers[1].forward(&self.store, h1.view());
        let h2 = relu(&z2);
        let logits = self.layers[2].forward(&self.store, h2.view());
        Forward { z1, h1, z2, h2, logits }
    }

    fn pair_matrix(&self, a: ArrayView2<f32>, b: ArrayView2<f32>) -> Result<Array2<f32>> {
        for m in [a, b] {
            if m.ncols() != self.input_dim {
                return Err(Error::DimensionMismatch {
                    context: "siamese shift input".into(),
                    expected: self.input_dim,
                    actual: m.ncols(),
                });
            }
        }
        let d = self.input_dim;
        let mut x = Array2::<f32>::zeros((a.nrows(), 3 * d));
        x.slice_mut(s![.., ..d]).assign(&a);
        x.slice_mut(s![.., d..2 * d]).assign(&b);
        x.slice_mut(s![.., 2 * d..]).assign(&(&a - &b));
        Ok(x)
    }

    fn doc_matrix(&self, texts: &[&str], e: Option<ArrayView2<f32>>) -> Result<Array2<f32>> {
        let e = e.ok_or_else(|| Error::InvalidInput("siamese shift model needs sentence embeddings".into()))?;
        if e.nrows() != texts.len() {
            return Err(Error::LengthMismatch {
                left: texts.len(),
                right: e.nrows(),
            });
        }
        let n = e.nrows();
        if n < 2 {
            return Ok(Array2::zeros((0, 3 * self.input_dim)));
        }
        self.pair_matrix(e.slice(s![..n - 1, ..]), e.slice(s![1.., ..]))
    }

    /// Trains on pairs given as row-aligned embeddings of the first and
    /// second sentence.
    pub fn fit(
        &mut self,
        a: ArrayView2<f32>,
        b: ArrayView2<f32>,
        labels: &[u8],
        schedule: &ShiftSchedule,
    ) -> Result<()> {
        schedule.validate()?;
        if a.nrows() != labels.len() || b.nrows() != labels.len() {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: a.nrows().min(b.nrows()),
            });
        }
        if labels.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let x = self.pair_matrix(a, b)?;
        let mut adam = Adam::new(&self.store, schedule.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed ^ 0x051a_3e5e);
        let mut order: Vec<usize> = (0..labels.len()).collect();
        for epoch in 0..schedule.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(schedule.batch_size) {
                let xb = x.select(Axis(0), batch);
                let targets: Vec<usize> = batch.iter().map(|&i| labels[i] as usize).collect();
                let weights: Vec<f64> = batch.iter().map(|&i| schedule.weight(labels[i])).collect();
                let mut grads = Grads::zeros_like(&self.store);
                let loss = self.loss_and_grad(xb.view(), &targets, &weights, &mut grads);
                if let Some(c) = schedule.grad_clip {
                    clip_grad_norm(&mut grads, c);
                }
                if !grads.is_finite() {
                    return Err(Error::NonFinite(format!("siamese gradient in epoch {epoch}")));
                }
                adam.step(&mut self.store, &grads);
                self.loss_trace.push(loss);
                epoch_loss += loss * batch.len() as f64;
            }
            log::info!("siamese shift epoch {epoch}: loss {:.5}", epoch_loss / labels.len() as f64);
        }
        Ok(())
    }

    /// Weighted mean cross-entropy of a batch; gradients are added to `grads`.
    fn loss_and_grad(&self, x: ArrayView2<f32>, targets: &[usize], weights: &[f64], grads: &mut Grads) -> f64 {
        let f = self.forward(x);
        let total: f64 = weights.iter().sum();
        let (sum, d_logits) = softmax_cross_entropy(f.logits.view(), targets, Some(weights));
        let d_logits = d_logits / total as f32;
        let d_h2 = self.layers[2].backward(&self.store, grads, f.h2.view(), d_logits.view());
        let d_z2 = relu_backward(&f.z2, d_h2);
        let d_h1 = self.layers[1].backward(&self.store, grads, f.h1.view(), d_z2.view());
        let d_z1 = relu_backward(&f.z1, d_h1);
        self.layers[0].backward(&self.store, grads, x, d_z1.view());
        sum / total
    }

    /// Trains on documents that carry sentence embeddings and shift labels.
    pub fn fit_docs(&mut self, docs: &[ShiftDoc], schedule: &ShiftSchedule) -> Result<()> {
        let mut rows_a = Vec::new();
        let mut rows_b = Vec::new();
        let mut labels = Vec::new();
        for doc in docs {
            let e = doc
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::InvalidInput(format!("{} has no sentence embeddings", doc.doc_id)))?;
            let y = doc.labels.as_ref().ok_or_else(|| Error::MissingGold {
                doc_id: doc.doc_id.clone(),
                sentence: 0,
            })?;
            if e.nrows() != doc.len() {
                return Err(Error::LengthMismatch {
                    left: doc.len(),
                    right: e.nrows(),
                });
            }
            for (i, &l) in y.iter().enumerate() {
                rows_a.push(e.row(i).to_owned());
                rows_b.push(e.row(i + 1).to_owned());
                labels.push(l);
            }
        }
        let stack = |rows: &[Array1<f32>]| -> Result<Array2<f32>> {
            if rows.is_empty() {
                return Ok(Array2::zeros((0, self.input_dim)));
            }
            let views: Vec<_> = rows.iter().map(|r| r.view()).collect();
            ndarray::stack(Axis(0), &views).map_err(|e| Error::InvalidInput(e.to_string()))
        };
        let a = stack(&rows_a)?;
        let b = stack(&rows_b)?;
        self.fit(a.view(), b.view(), &labels, schedule)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blob = write_weights(&dir.join("weights.bin"), self.store.data())?;
        let meta = SiameseMeta {
            kind: "siamese".into(),
            encoder_id: self.encoder_id.clone(),
            input_dim: self.input_dim,
            widths: SIAMESE_WIDTHS,
            weights_sha256: sha256_hex(&blob),
        };
        crate::util::write_json(&dir.join("shift_model.json"), &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SiameseMeta = crate::util::read_json(&dir.join("shift_model.json"))?;
        if meta.kind != "siamese" || meta.widths != SIAMESE_WIDTHS {
            return Err(Error::InvalidConfig(format!(
                "{} does not hold a siamese shift model with widths {SIAMESE_WIDTHS:?}",
                dir.display()
            )));
        }
        let values = read_weights(&dir.join("weights.bin"), Some(&meta.weights_sha256))?;
        let mut model = Self::new(meta.encoder_id, meta.input_dim, 0)?;
        model.store.load_values(&values)?;
        Ok(model)
    }
}

impl ShiftModel for SiameseShift {
    fn model_id(&self) -> String {
        let mut bytes = self.encoder_id.as_bytes().to_vec();
        bytes.extend(f32_bytes(self.store.data()));
        format!("siamese:{}", &sha256_hex(&bytes)[..16])
    }

    fn shift_embedding_dim(&self) -> usize {
        SIAMESE_WIDTHS[1]
    }

    fn embed_pairs(&self, texts: &[&str], e: Option<ArrayView2<f32>>) -> Result<Array2<f32>> {
        let x = self.doc_matrix(texts, e)?;
        Ok(self.forward(x.view()).h2)
    }

    fn shift_probabilities(&self, texts: &[&str], e: Option<ArrayView2<f32>>) -> Result<Vec<f32>> {
        let x = self.doc_matrix(texts, e)?;
        let logp = crate::nn::log_softmax_rows(self.forward(x.view()).logits.view());
        Ok(logp.column(1).iter().map(|v| v.exp() as f32).collect())
    }
}

/// Trains the siamese head on pairs, encoding their sentences with the
/// frozen `encoder`.
pub fn train_siamese_shift<E: SentenceEncoder + ?Sized>(
    encoder: &E,
    pairs: &[ShiftPair],
    schedule: &ShiftSchedule,
) -> Result<SiameseShift> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for p in pairs {
        for t in [p.text_a.as_str(), p.text_b.as_str()] {
            let next = index.len();
            index.entry(t).or_insert(next);
        }
    }
    let mut unique = vec![""; index.len()];
    for (t, &i) in &index {
        unique[i] = t;
    }
    let vectors = encoder.encode(&unique)?;
    if vectors.ncols() != encoder.dim() || vectors.nrows() != unique.len() {
        return Err(Error::Encoder(format!(
            "{} returned a {}x{} matrix for {} sentences of width {}",
            encoder.encoder_id(),
            vectors.nrows(),
            vectors.ncols(),
            unique.len(),
            encoder.dim()
        )));
    }
    let a = vectors.select(Axis(0), &pairs.iter().map(|p| index[p.text_a.as_str()]).collect::<Vec<_>>());
    let b = vectors.select(Axis(0), &pairs.iter().map(|p| index[p.text_b.as_str()]).collect::<Vec<_>>());
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    let mut model = SiameseShift::new(encoder.encoder_id(), encoder.dim(), schedule.seed)?;
    model.fit(a.view(), b.view(), &labels, schedule)?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::HashingEncoder;
    use ndarray::array;

    #[test]
    fn identical_sentences_have_zero_difference_block() {
        let e = array![0.5f32, -1.0, 2.0];
        let x = siamese_input(e.view(), e.view());
        assert!(x.slice(s![6..]).iter().all(|&v| v == 0.0));
        assert_eq!(x.slice(s![..3]), e);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = SiameseShift::new("enc", 4, 0).unwrap();
        let e = Array2::<f32>::zeros((3, 5));
        assert!(matches!(
            m.embed_pairs(&["a", "b", "c"], Some(e.view())),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn embeddings_have_one_row_per_pair_and_are_deterministic() {
        let m = SiameseShift::new("enc", 4, 3).unwrap();
        let e = Array2::from_shape_fn((4, 4), |(i, j)| (i * 4 + j) as f32 / 10.0);
        let texts = ["a", "b", "c", "d"];
        let first = m.embed_pairs(&texts, Some(e.view())).unwrap();
        assert_eq!(first.dim(), (3, SIAMESE_WIDTHS[1]));
        assert_eq!(first, m.embed_pairs(&texts, Some(e.view())).unwrap());
        let single = m.embed_pairs(&["a"], Some(e.slice(s![..1, ..]))).unwrap();
        assert_eq!(single.nrows(), 0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut m = SiameseShift::new("enc", 3, 1).unwrap();
        let x = Array2::from_shape_fn((4, 9), |(i, j)| ((i * 9 + j) as f32 * 0.37).sin());
        let targets = [0, 1, 1, 0];
        let weights = [1.0, 2.0, 2.0, 1.0];
        let mut g = Grads::zeros_like(&m.store);
        m.loss_and_grad(x.view(), &targets, &weights, &mut g);
        // Small steps keep the probes away from ReLU kinks.
        for &k in &[0usize, 17, 900, 4700, m.store.len() - 1] {
            let eps = 2e-3;
            let orig = m.store.data()[k];
            m.store.data_mut()[k] = orig + eps;
            let up = m.loss_and_grad(x.view(), &targets, &weights, &mut Grads::zeros_like(&m.store));
            m.store.data_mut()[k] = orig - eps;
            let down = m.loss_and_grad(x.view(), &targets, &weights, &mut Grads::zeros_like(&m.store));
            m.store.data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps as f64);
            let analytic = g.data()[k] as f64;
            assert!((numeric - analytic).abs() < 2e-3 + 2e-2 * analytic.abs(), "{k}: {numeric} vs {analytic}");
        }
    }

    #[test]
    fn learns_a_separable_signal_and_roundtrips() {
        let enc = HashingEncoder::new(32, false).unwrap();
        let mut pairs = Vec::new();
        for i in 0..60 {
            let shift = i % 3 == 0;
            let a = format!("alpha beta gamma {}", i % 5);
            let b = if shift { format!("omega zeta {}", i % 7) } else { format!("alpha beta delta {}", i % 5) };
            pairs.push(ShiftPair {
                doc_id: "d".into(),
                i,
                text_a: a,
                text_b: b,
                label: u8::from(shift),
            });
        }
        let mut schedule = ShiftSchedule::siamese();
        schedule.epochs = 30;
        schedule.batch_size = 8;
        let model = train_siamese_shift(&enc, &pairs, &schedule).unwrap();
        assert!(model.loss_trace.last().unwrap() < &0.1);
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        let back = SiameseShift::load(dir.path()).unwrap();
        assert_eq!(back.model_id(), model.model_id());
    }
}
