//! Grid search over the joint model's loss weight.

use serde::{Deserialize, Serialize};

use super::config::{SequenceModelConfig, Variant};
use super::train::{train_sequence_labeler, TrainExample};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: f32,
    pub val_macro_f1: f64,
    pub best_epoch: usize,
}

/// 0.1, 0.2, ..., 0.9.
pub fn default_lambda_grid() -> Vec<f32> {
    (1..=9).map(|i| i as f32 / 10.0).collect()
}

/// Parses `start:stop:step` (inclusive), a comma list, or a single value.
/// Values are rounded to six decimals so that `0.1:0.9:0.1` gives 0.3, not
/// 0.30000001.
pub fn lambda_grid(spec: &str) -> Result<Vec<f32>> {
    let bad = || Error::InvalidConfig(format!("bad lambda grid {spec:?}"));
    let round = |v: f64| ((v * 1e6).round() / 1e6) as f32;
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values: Vec<f32> = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        let (start, stop, step) = (parse(start)?, parse(stop)?, parse(step)?);
        if !(step > 0.0) || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| round(start + i as f64 * step)).collect()
    } else {
        spec.split(',').map(|s| parse(s).map(round)).collect::<Result<_>>()?
    };
    if values.is_empty() || values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(bad());
    }
    Ok(values)
}

/// Trains one joint model per grid value; rows follow the grid order.
pub fn sweep_lambda(
    base: &SequenceModelConfig,
    grid: &[f32],
    train: &[TrainExample],
    val: &[TrainExample],
) -> Result<Vec<SweepRow>> {
    if base.variant != Variant::Mtl {
        return Err(Error::InvalidConfig("the lambda sweep needs an mtl config".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidInput("the lambda sweep needs validation documents".into()));
    }
    grid.iter()
        .map(|&lambda| {
            let config = SequenceModelConfig {
                lambda,
                ..base.clone()
            };
            let trained = train_sequence_labeler(config, train, val)?;
            log::info!("lambda {lambda}: val macro F1 {:?}", trained.best_val_f1);
            Ok(SweepRow {
                lambda,
                val_macro_f1: trained.best_val_f1.unwrap_or(0.0),
                best_epoch: trained.best_epoch,
            })
        })
        .collect()
}

/// Row with the highest validation F1; the smallest lambda wins ties.
pub fn best_lambda(rows: &[SweepRow]) -> Option<&SweepRow> {
    rows.iter().fold(None, |best: Option<&SweepRow>, r| match best {
        Some(b) if b.val_macro_f1 >= r.val_macro_f1 => Some(b),
        _ => Some(r),
    })
}
