//! Mini-batch training over whole documents with validation-based selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SequenceModelConfig;
use super::model::{DocInput, SequenceModel};
use crate::corpus::MainLabel;
use crate::metrics::{macro_f1_with, MacroOptions, MetricsReport};
use crate::nn::{clip_grad_norm, Adam, Grads};
use crate::{Error, Result};

/// One training or evaluation document.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub doc_id: String,
    pub input: DocInput,
    /// Label indices into the model's label set.
    pub labels: Vec<usize>,
    /// Multiplier on this document's loss.
    pub weight: f64,
}

impl TrainExample {
    pub fn new(doc_id: impl Into<String>, input: DocInput, labels: Vec<usize>) -> Self {
        Self {
            doc_id: doc_id.into(),
            input,
            labels,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Weighted mean document loss over the epoch.
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_macro_f1: Option<f64>,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: SequenceModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_f1: Option<f64>,
}

/// Name of label index `i` in reports: the main-label code when the model
/// predicts the seven main labels, the index otherwise.
pub fn label_name(i: usize, num_labels: usize) -> String {
    if num_labels == MainLabel::COUNT {
        MainLabel::from_index(i).map_or_else(|| i.to_string(), |l| l.code().to_string())
    } else {
        i.to_string()
    }
}

/// Macro F1 of the model's predictions over all sentences of `examples`.
pub fn evaluate(model: &SequenceModel, examples: &[TrainExample]) -> Result<MetricsReport> {
    let k = model.config().num_labels;
    let predictions: Vec<Vec<usize>> = examples
        .par_iter()
        .map(|ex| model.predict(&ex.input))
        .collect::<Result<_>>()?;
    let names: Vec<String> = (0..k).map(|i| label_name(i, k)).collect();
    let preds: Vec<&String> = predictions.iter().flatten().map(|&i| &names[i]).collect();
    let refs: Vec<&String> = examples
        .iter()
        .flat_map(|ex| &ex.labels)
        .map(|&i| names.get(i).ok_or_else(|| Error::LabelOutsideSet(i.to_string())))
        .collect::<Result<_>>()?;
    let set: Vec<&String> = names.iter().collect();
    macro_f1_with(
        &preds,
        &refs,
        &set,
        MacroOptions {
            support: model.config().zero_support,
            ..MacroOptions::default()
        },
    )
}

/// Weighted mean document loss, computed sequentially.
pub fn mean_loss(model: &SequenceModel, examples: &[TrainExample]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        total += ex.weight * model.loss(&ex.input, &ex.labels)?.total;
    }
    Ok(total / examples.len() as f64)
}

/// Most batches are split into this many fixed chunks whose gradients are
/// computed in parallel and summed in chunk order, so results do not depend
/// on the thread count.
const GRAD_CHUNKS: usize = 8;

/// Averaged weighted gradient of a batch; returns the summed weighted loss.
pub fn batch_gradient(
    model: &SequenceModel,
    batch: &[&TrainExample],
) -> Result<(Grads, f64)> {
    let scale = 1.0 / batch.len() as f64;
    let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let parts: Vec<(Grads, f64)> = batch
        .par_chunks(chunk)
        .map(|docs| {
            let mut g = Grads::zeros_like(model.params());
            let mut loss = 0.0;
            for ex in docs {
                let l = model.loss_and_grad(&ex.input, &ex.labels, &mut g, ex.weight * scale)?;
                loss += ex.weight * l.total;
            }
            Ok((g, loss))
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (mut total, mut loss) = iter.next().expect("non-empty batch");
    for (g, l) in iter {
        total.add_assign(&g);
        loss += l;
    }
    Ok((total, loss))
}

/// Trains a fresh model built from `config`.
pub fn train_sequence_labeler(
    config: SequenceModelConfig,
    train: &[TrainExample],
    val: &[TrainExample],
) -> Result<TrainedModel> {
    let model = SequenceModel::new(config)?;
    train_model(model, train, val)
}

/// Continues training `model` (used for warm starts).
pub fn train_model(
    mut model: SequenceModel,
    train: &[TrainExample],
    val: &[TrainExample],
) -> Result<TrainedModel> {
    let active: Vec<&TrainExample> = train.iter().filter(|ex| ex.weight != 0.0).collect();
    if active.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let config = model.config().clone();
    let mut opt = Adam::new(model.params(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_7a1e);
    let mut order: Vec<usize> = (0..active.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best_values = model.params().data().to_vec();
    let mut best_epoch = 0;
    let mut best_f1: Option<f64> = None;
    let mut since_best = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch_idx in order.chunks(config.batch_size) {
            let batch: Vec<&TrainExample> = batch_idx.iter().map(|&i| active[i]).collect();
            let (mut grads, loss) = batch_gradient(&model, &batch)?;
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!("gradients at epoch {epoch}")));
            }
            if let Some(max) = config.grad_clip {
                clip_grad_norm(&mut grads, max);
            }
            opt.step(model.params_mut(), &grads);
            epoch_loss += loss;
        }
        let train_loss = epoch_loss / active.len() as f64;
        let val_f1 = if val.is_empty() {
            None
        } else {
            Some(evaluate(&model, val)?.macro_f1)
        };
        let improved = match (val_f1, best_f1) {
            (None, _) => true,
            (Some(_), None) => true,
            (Some(v), Some(b)) => v > b,
        };
        if improved {
            best_values.copy_from_slice(model.params().data());
            best_epoch = epoch;
            best_f1 = val_f1;
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::debug!("epoch {epoch}: loss {train_loss:.4} val {val_f1:?}");
        log.push(EpochLog {
            epoch,
            train_loss,
            val_macro_f1: val_f1,
            best: improved,
        });
        if config.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    model.params_mut().load_values(&best_values)?;
    Ok(TrainedModel {
        model,
        log,
        best_epoch,
        best_val_f1: best_f1,
    })
}
