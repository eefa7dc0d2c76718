//! Segmentation of long legal judgments into rhetorical-role units.
//!
//! The crate treats a judgment as a sequence of sentences and predicts one
//! rhetorical role per sentence. It covers the whole pipeline:
//!
//! - [`corpus`]: the document data model, annotation import, adjudication,
//!   label reduction and document-level splitting.
//! - [`metrics`]: label-wise and macro F1, annotator agreement (pairwise F1,
//!   Fleiss' kappa), confusion matrices and transfer deltas.
//! - [`encoders`]: sentence encoders, the handcrafted featurizer and the
//!   on-disk embedding archive.
//! - [`lsp`]: the label-shift auxiliary task (pair construction, siamese and
//!   pair-coherence shift models, shift embeddings).
//! - [`labelers`]: the linear-chain CRF, BiLSTM variants, the shift-aware
//!   BiLSTM-CRF and the multitask model.
//! - [`distill`]: self-training over unlabeled judgments.
//! - [`experiments`]: domain transfer and judgment-prediction harnesses.

pub mod corpus;
pub mod distill;
pub mod encoders;
mod error;
pub mod experiments;
pub mod labelers;
pub mod lsp;
pub mod metrics;
pub mod nn;
pub mod util;

pub use error::{Error, ErrorKind, Result};
