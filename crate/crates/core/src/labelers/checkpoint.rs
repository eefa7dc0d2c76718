//! On-disk checkpoints: `weights.bin`, `config.json` and `training_log.jsonl`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::SequenceModelConfig;
use super::model::{DocInput, SequenceModel};
use super::train::{label_name, EpochLog, TrainedModel};
use crate::nn::{read_weights, write_weights};
use crate::util::sha256_hex;
use crate::{Error, Result};

/// Identifiers of the encoders that produced a model's inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderIds {
    pub rr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    config: SequenceModelConfig,
    encoder_ids: EncoderIds,
    labels: Vec<String>,
    best_epoch: usize,
    #[serde(default)]
    best_val_f1: Option<f64>,
    weights_sha256: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: SequenceModel,
    pub encoder_ids: EncoderIds,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_f1: Option<f64>,
}

/// One document's prediction, as exported to JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn from_trained(trained: TrainedModel, encoder_ids: EncoderIds) -> Self {
        Self {
            model: trained.model,
            encoder_ids,
            log: trained.log,
            best_epoch: trained.best_epoch,
            best_val_f1: trained.best_val_f1,
        }
    }

    pub fn config(&self) -> &SequenceModelConfig {
        self.model.config()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let blob = write_weights(&dir.join("weights.bin"), self.model.params().data())?;
        let k = self.config().num_labels;
        let meta = CheckpointMeta {
            config: self.config().clone(),
            encoder_ids: self.encoder_ids.clone(),
            labels: (0..k).map(|i| label_name(i, k)).collect(),
            best_epoch: self.best_epoch,
            best_val_f1: self.best_val_f1,
            weights_sha256: sha256_hex(&blob),
        };
        crate::util::write_json(&dir.join("config.json"), &meta)?;
        crate::util::write_jsonl(&dir.join("training_log.jsonl"), &self.log)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta: CheckpointMeta = crate::util::read_json(&dir.join("config.json"))?;
        let values = read_weights(&dir.join("weights.bin"), Some(&meta.weights_sha256))?;
        let model = SequenceModel::with_values(meta.config, &values)?;
        let log_path = dir.join("training_log.jsonl");
        let log = if log_path.exists() {
            crate::util::read_jsonl(&log_path)?
        } else {
            Vec::new()
        };
        Ok(Self {
            model,
            encoder_ids: meta.encoder_ids,
            log,
            best_epoch: meta.best_epoch,
            best_val_f1: meta.best_val_f1,
        })
    }

    /// Checks that supplied inputs come from the encoders the model was trained on.
    pub fn check_encoders(&self, supplied: &EncoderIds) -> Result<()> {
        if supplied != &self.encoder_ids {
            return Err(Error::InvalidInput(format!(
                "encoder mismatch: checkpoint expects {:?}, got {:?}",
                self.encoder_ids, supplied
            )));
        }
        Ok(())
    }

    /// Labels (and optionally marginals) for one document.
    pub fn predict(
        &self,
        doc_id: &str,
        input: &DocInput,
        supplied: &EncoderIds,
        with_marginals: bool,
    ) -> Result<Prediction> {
        self.check_encoders(supplied)?;
        let k = self.config().num_labels;
        let labels = self
            .model
            .predict(input)?
            .into_iter()
            .map(|i| label_name(i, k))
            .collect();
        let marginals = if with_marginals {
            let m: Array2<f64> = self.model.marginals(input)?;
            Some(m.rows().into_iter().map(|r| r.to_vec()).collect())
        } else {
            None
        };
        Ok(Prediction {
            doc_id: doc_id.to_string(),
            labels,
            marginals,
        })
    }
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    crate::util::write_jsonl(path, predictions)
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    crate::util::read_jsonl(path)
}
