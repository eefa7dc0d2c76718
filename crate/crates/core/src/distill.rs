//! Self-training: a teacher hard-labels unlabeled judgments and a student
//! learns from labeled plus pseudo-labeled documents.
//!
//! The student objective is
//! `(1/|D_L|) Σ_L loss + (α_U/|D_U|) Σ_U loss`. It is realised with
//! per-document weights `N/|D_L|` and `α_U·N/|D_U|`, where `N` counts the
//! documents with non-zero weight, so that the mini-batch average of
//! weighted losses is an unbiased estimate of the objective. With `α_U = 0`
//! every labeled weight is 1 and training is exactly supervised training.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::labelers::{
    evaluate, label_name, train_model, train_sequence_labeler, write_predictions, Checkpoint, DocInput,
    EncoderIds, Prediction, SequenceModel, SequenceModelConfig, TrainExample, TrainedModel,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    #[serde(default = "default_alpha")]
    pub alpha_u: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_per_iteration")]
    pub unlabeled_docs_per_iteration: usize,
    pub student: SequenceModelConfig,
    /// Start each student from its teacher's weights instead of a fresh
    /// initialisation.
    #[serde(default)]
    pub warm_start: bool,
    /// Stop when a student's validation F1 falls below its teacher's.
    #[serde(default)]
    pub early_stop: bool,
    /// Seed of the unlabeled-document sampling.
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.3
}
fn default_iterations() -> usize {
    2
}
fn default_per_iteration() -> usize {
    48
}

impl DistillConfig {
    /// Defaults around a student config: α_U 0.3, two iterations of 48
    /// unlabeled documents, fresh students.
    pub fn new(student: SequenceModelConfig) -> Self {
        Self {
            alpha_u: default_alpha(),
            iterations: default_iterations(),
            unlabeled_docs_per_iteration: default_per_iteration(),
            student,
            warm_start: false,
            early_stop: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_u >= 0.0) || !self.alpha_u.is_finite() {
            return Err(Error::InvalidConfig(format!("alpha_u {} must be >= 0", self.alpha_u)));
        }
        if self.iterations == 0 || self.unlabeled_docs_per_iteration == 0 {
            return Err(Error::InvalidConfig(
                "iterations and unlabeled_docs_per_iteration must be positive".into(),
            ));
        }
        self.student.validate()
    }
}

/// An unlabeled document's model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledDoc {
    pub doc_id: String,
    pub input: DocInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Fingerprint of the model that produced the pseudo-labels.
    pub teacher: String,
    pub student: String,
    pub unlabeled_docs: Vec<String>,
    pub alpha_u: f64,
    pub teacher_val_f1: Option<f64>,
    pub student_val_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillLog {
    pub initial_teacher: String,
    pub config: DistillConfig,
    pub iterations: Vec<IterationRecord>,
    /// Why the run ended before the configured iteration count, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped: Option<String>,
}

impl DistillLog {
    /// Checks that each iteration's teacher is the previous student.
    pub fn verify_chain(&self) -> Result<()> {
        let mut expected = &self.initial_teacher;
        for rec in &self.iterations {
            if &rec.teacher != expected {
                return Err(Error::InvalidInput(format!(
                    "iteration {} was taught by {} but the previous model is {expected}",
                    rec.iteration, rec.teacher
                )));
            }
            expected = &rec.student;
        }
        Ok(())
    }
}

pub struct DistillOutcome {
    pub student: TrainedModel,
    pub log: DistillLog,
}

/// Hard pseudo-labels: the teacher's decoded label sequence per document.
pub fn pseudo_label(teacher: &SequenceModel, docs: &[&UnlabeledDoc]) -> Result<Vec<TrainExample>> {
    docs.par_iter()
        .map(|d| {
            let labels = teacher.predict(&d.input)?;
            Ok(TrainExample::new(d.doc_id.clone(), d.input.clone(), labels))
        })
        .collect()
}

/// Labeled and pseudo-labeled examples with the objective's weights.
pub fn weighted_union(labeled: &[TrainExample], pseudo: &[TrainExample], alpha_u: f64) -> Vec<TrainExample> {
    let n_l = labeled.len() as f64;
    let n_u = pseudo.len() as f64;
    let active_u = alpha_u > 0.0 && !pseudo.is_empty();
    let n = n_l + if active_u { n_u } else { 0.0 };
    let mut out: Vec<TrainExample> = labeled
        .iter()
        .cloned()
        .map(|mut ex| {
            ex.weight = n / n_l;
            ex
        })
        .collect();
    if active_u {
        out.extend(pseudo.iter().cloned().map(|mut ex| {
            ex.weight = alpha_u * n / n_u;
            ex
        }));
    }
    out
}

/// The self-training objective evaluated for `model`.
pub fn self_training_objective(
    model: &SequenceModel,
    labeled: &[TrainExample],
    pseudo: &[TrainExample],
    alpha_u: f64,
) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mean = |xs: &[TrainExample]| -> Result<f64> {
        let mut total = 0.0;
        for ex in xs {
            total += model.loss(&ex.input, &ex.labels)?.total;
        }
        Ok(total / xs.len() as f64)
    };
    let mut value = mean(labeled)?;
    if alpha_u != 0.0 && !pseudo.is_empty() {
        value += alpha_u * mean(pseudo)?;
    }
    Ok(value)
}

fn check_leakage(labeled: &[TrainExample], held_out: &BTreeSet<String>, pool: &[UnlabeledDoc]) -> Result<()> {
    let labeled_ids: BTreeSet<&str> = labeled.iter().map(|e| e.doc_id.as_str()).collect();
    let leaked: Vec<String> = pool
        .iter()
        .filter(|d| labeled_ids.contains(d.doc_id.as_str()) || held_out.contains(&d.doc_id))
        .map(|d| d.doc_id.clone())
        .collect();
    if leaked.is_empty() {
        Ok(())
    } else {
        Err(Error::Leakage(leaked))
    }
}

fn val_f1(model: &SequenceModel, val: &[TrainExample]) -> Result<Option<f64>> {
    if val.is_empty() {
        Ok(None)
    } else {
        Ok(Some(evaluate(model, val)?.macro_f1))
    }
}

/// Runs self-training from `teacher`.
///
/// `held_out` lists validation and test document ids; none of them, and no
/// labeled document, may appear in `unlabeled`. When `run_dir` is given the
/// teacher, every student checkpoint, the pseudo-labels and
/// `distill_log.json` are written there.
pub fn self_train(
    teacher: &SequenceModel,
    labeled: &[TrainExample],
    unlabeled: &[UnlabeledDoc],
    val: &[TrainExample],
    held_out: &BTreeSet<String>,
    cfg: &DistillConfig,
    run_dir: Option<(&Path, &EncoderIds)>,
) -> Result<DistillOutcome> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut leak_check_ids = held_out.clone();
    leak_check_ids.extend(val.iter().map(|e| e.doc_id.clone()));
    check_leakage(labeled, &leak_check_ids, unlabeled)?;

    let mut order: Vec<&UnlabeledDoc> = unlabeled.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut remaining = order.as_slice();

    let mut log = DistillLog {
        initial_teacher: teacher.fingerprint(),
        config: cfg.clone(),
        iterations: Vec::new(),
        stopped: None,
    };
    if let Some((dir, ids)) = run_dir {
        save_model(teacher, &dir.join("teacher"), ids)?;
    }
    let mut current = TrainedModel {
        model: teacher.clone(),
        log: Vec::new(),
        best_epoch: 0,
        best_val_f1: val_f1(teacher, val)?,
    };
    for iteration in 1..=cfg.iterations {
        if remaining.is_empty() {
            log.stopped = Some(format!("unlabeled pool exhausted before iteration {iteration}"));
            break;
        }
        let take = cfg.unlabeled_docs_per_iteration.min(remaining.len());
        let (batch, rest) = remaining.split_at(take);
        remaining = rest;
        let pseudo = pseudo_label(&current.model, batch)?;
        let data = weighted_union(labeled, &pseudo, cfg.alpha_u);
        let student_config = SequenceModelConfig {
            seed: cfg.student.seed.wrapping_add(iteration as u64 - 1),
            ..cfg.student.clone()
        };
        let student = if cfg.warm_start {
            let mut m = SequenceModel::with_values(student_config, current.model.params().data())?;
            m.params_mut().load_values(current.model.params().data())?;
            train_model(m, &data, val)?
        } else {
            train_sequence_labeler(student_config, &data, val)?
        };
        let teacher_f1 = val_f1(&current.model, val)?;
        let student_f1 = val_f1(&student.model, val)?;
        log::info!("self-training iteration {iteration}: teacher {teacher_f1:?} -> student {student_f1:?}");
        let record = IterationRecord {
            iteration,
            teacher: current.model.fingerprint(),
            student: student.model.fingerprint(),
            unlabeled_docs: batch.iter().map(|d| d.doc_id.clone()).collect(),
            alpha_u: cfg.alpha_u,
            teacher_val_f1: teacher_f1,
            student_val_f1: student_f1,
        };
        if let Some((dir, ids)) = run_dir {
            let iter_dir = dir.join(format!("iteration_{iteration}"));
            Checkpoint::from_trained(student.clone(), ids.clone()).save(&iter_dir.join("student"))?;
            let k = student.model.config().num_labels;
            let preds: Vec<Prediction> = pseudo
                .iter()
                .map(|ex| Prediction {
                    doc_id: ex.doc_id.clone(),
                    labels: ex.labels.iter().map(|&i| label_name(i, k)).collect(),
                    marginals: None,
                })
                .collect();
            write_predictions(&iter_dir.join("pseudo_labels.jsonl"), &preds)?;
        }
        log.iterations.push(record);
        let regressed = matches!((teacher_f1, student_f1), (Some(t), Some(s)) if s < t);
        current = student;
        if cfg.early_stop && regressed {
            log.stopped = Some(format!("validation F1 regressed in iteration {iteration}"));
            break;
        }
    }
    if let Some((dir, _)) = run_dir {
        crate::util::write_json(&dir.join("distill_log.json"), &log)?;
    }
    Ok(DistillOutcome { student: current, log })
}

fn save_model(model: &SequenceModel, dir: &Path, ids: &EncoderIds) -> Result<()> {
    let trained = TrainedModel {
        model: model.clone(),
        log: Vec::new(),
        best_epoch: 0,
        best_val_f1: None,
    };
    Checkpoint::from_trained(trained, ids.clone()).save(dir)
}

/// Re-reads a run directory and checks the chain against the stored
/// checkpoints: the teacher and each student must hash to the logged
/// fingerprints.
pub fn verify_run_dir(dir: &Path) -> Result<DistillLog> {
    let log: DistillLog = crate::util::read_json(&dir.join("distill_log.json"))?;
    log.verify_chain()?;
    let teacher = Checkpoint::load(&dir.join("teacher"))?;
    if teacher.model.fingerprint() != log.initial_teacher {
        return Err(Error::InvalidInput("stored teacher does not match the log".into()));
    }
    for rec in &log.iterations {
        let path = dir.join(format!("iteration_{}", rec.iteration)).join("student");
        if Checkpoint::load(&path)?.model.fingerprint() != rec.student {
            return Err(Error::InvalidInput(format!(
                "student of iteration {} does not match the log",
                rec.iteration
            )));
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labelers::{mean_loss, Variant};
    use ndarray::Array2;
    use rand::Rng;

    fn examples(prefix: &str, docs: usize, seed: u64) -> Vec<TrainExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..docs)
            .map(|d| {
                let n = rng.random_range(3..7);
                let labels: Vec<usize> = (0..n).map(|i| (i / 2 + d) % 3).collect();
                let x = Array2::from_shape_fn((n, 4), |(i, j)| {
                    f32::from(u8::from(j == labels[i])) + rng.random_range(-0.2..0.2)
                });
                TrainExample::new(format!("{prefix}{d}"), DocInput::new(x), labels)
            })
            .collect()
    }

    fn unlabeled(ex: &[TrainExample]) -> Vec<UnlabeledDoc> {
        ex.iter()
            .map(|e| UnlabeledDoc {
                doc_id: e.doc_id.clone(),
                input: e.input.clone(),
            })
            .collect()
    }

    fn student() -> SequenceModelConfig {
        let mut c = SequenceModelConfig::bilstm_crf(4);
        c.variant = Variant::BilstmCrf;
        c.num_labels = 3;
        c.hidden = Some(4);
        c.batch_size = 4;
        c.epochs = 8;
        c.learning_rate = 0.05;
        c
    }

    #[test]
    fn zero_alpha_objective_is_supervised_loss() {
        let labeled = examples("l", 5, 1);
        let pseudo = examples("u", 7, 2);
        let model = SequenceModel::new(student()).unwrap();
        let a = self_training_objective(&model, &labeled, &pseudo, 0.0).unwrap();
        assert_eq!(a, mean_loss(&model, &labeled).unwrap());
        assert_eq!(a, self_training_objective(&model, &labeled, &[], 0.3).unwrap());
        let w = weighted_union(&labeled, &pseudo, 0.0);
        assert_eq!(w.len(), labeled.len());
        assert!(w.iter().all(|e| e.weight == 1.0));
    }

    #[test]
    fn weights_reproduce_the_objective() {
        let labeled = examples("l", 4, 1);
        let pseudo = examples("u", 6, 2);
        let model = SequenceModel::new(student()).unwrap();
        let w = weighted_union(&labeled, &pseudo, 0.3);
        let mut weighted = 0.0;
        for ex in &w {
            weighted += ex.weight * model.loss(&ex.input, &ex.labels).unwrap().total;
        }
        weighted /= w.len() as f64;
        let direct = self_training_objective(&model, &labeled, &pseudo, 0.3).unwrap();
        assert!((weighted - direct).abs() < 1e-9 * direct.abs());
    }

    #[test]
    fn zero_alpha_student_equals_supervised_student() {
        let labeled = examples("l", 6, 1);
        let val = examples("v", 3, 3);
        let pool = unlabeled(&examples("u", 6, 2));
        let teacher = train_sequence_labeler(student(), &labeled, &val).unwrap().model;
        let mut cfg = DistillConfig::new(student());
        cfg.alpha_u = 0.0;
        cfg.iterations = 1;
        let out = self_train(&teacher, &labeled, &pool, &val, &BTreeSet::new(), &cfg, None).unwrap();
        let supervised = train_sequence_labeler(student(), &labeled, &val).unwrap();
        assert_eq!(out.student.model, supervised.model);
    }

    #[test]
    fn leakage_is_rejected() {
        let labeled = examples("l", 3, 1);
        let val = examples("v", 2, 3);
        let teacher = SequenceModel::new(student()).unwrap();
        let cfg = DistillConfig::new(student());
        let pool = unlabeled(&val);
        let err = self_train(&teacher, &labeled, &pool, &val, &BTreeSet::new(), &cfg, None);
        assert!(matches!(err, Err(Error::Leakage(ids)) if ids.len() == 2));
        let test_ids: BTreeSet<String> = ["u0".to_string()].into();
        let err = self_train(&teacher, &labeled, &unlabeled(&examples("u", 2, 2)), &[], &test_ids, &cfg, None);
        assert!(matches!(err, Err(Error::Leakage(ids)) if ids == vec!["u0".to_string()]));
    }

    #[test]
    fn run_directory_chain_verifies() {
        let labeled = examples("l", 6, 1);
        let val = examples("v", 3, 3);
        let pool = unlabeled(&examples("u", 8, 2));
        let teacher = train_sequence_labeler(student(), &labeled, &val).unwrap().model;
        let mut cfg = DistillConfig::new(student());
        cfg.unlabeled_docs_per_iteration = 3;
        let dir = tempfile::tempdir().unwrap();
        let ids = EncoderIds::default();
        let out = self_train(&teacher, &labeled, &pool, &val, &BTreeSet::new(), &cfg, Some((dir.path(), &ids))).unwrap();
        assert_eq!(out.log.iterations.len(), 2);
        assert_eq!(out.log.iterations[1].teacher, out.log.iterations[0].student);
        let used: BTreeSet<&String> = out.log.iterations.iter().flat_map(|r| &r.unlabeled_docs).collect();
        assert_eq!(used.len(), 6, "fresh documents each iteration");
        let back = verify_run_dir(dir.path()).unwrap();
        assert_eq!(back, out.log);
        let pseudo = crate::labelers::read_predictions(&dir.path().join("iteration_1/pseudo_labels.jsonl")).unwrap();
        assert_eq!(pseudo.len(), 3);

        let mut broken = out.log.clone();
        broken.iterations[1].teacher = "0000".into();
        assert!(broken.verify_chain().is_err());
    }

    #[test]
    fn exhausted_pool_stops_early() {
        let labeled = examples("l", 4, 1);
        let teacher = SequenceModel::new(student()).unwrap();
        let mut cfg = DistillConfig::new(student());
        cfg.iterations = 3;
        let out = self_train(&teacher, &labeled, &unlabeled(&examples("u", 2, 2)), &[], &BTreeSet::new(), &cfg, None)
            .unwrap();
        assert_eq!(out.log.iterations.len(), 1);
        assert!(out.log.stopped.is_some());
    }
}
