//! Sequence labelers for rhetorical roles: CRF core, BiLSTM variants,
//! shift-aware and joint models, training, checkpoints and prediction.

mod checkpoint;
mod classifier;
mod compose;
mod config;
mod crf;
mod data;
mod model;
mod sweep;
mod synthetic;
mod train;

pub use checkpoint::{read_predictions, write_predictions, Checkpoint, EncoderIds, Prediction};
pub use classifier::{context_ids, train_sentence_classifier, ClassifierSchedule, SentenceClassifier};
pub use compose::compose_lsp_input;
pub use data::{archive_embeddings, build_examples, encode_documents, gold_indices};
pub use config::{BoundaryMode, SequenceModelConfig, Variant};
pub use crf::{CrfGradient, LinearChainCrf};
pub use model::{DocInput, LossParts, SequenceModel};
pub use sweep::{best_lambda, default_lambda_grid, lambda_grid, sweep_lambda, SweepRow};
pub use synthetic::{synthetic_corpus, SyntheticConfig};
pub use train::{
    batch_gradient, evaluate, label_name, mean_loss, train_model, train_sequence_labeler,
    EpochLog, TrainExample, TrainedModel,
};
