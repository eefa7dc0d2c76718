//! Sentence encoders and the on-disk embedding archive.
//!
//! Every encoder maps a batch of sentences to one fixed-width vector per
//! sentence and carries an identifier that changes whenever its weights or
//! preprocessing change.

mod archive;
mod external;
mod handcrafted;
mod hashing;
mod static_vectors;
mod token;

pub use archive::{encode_corpus, ArchiveManifest, EmbeddingArchive, EncodeStats, ManifestEntry};
pub use external::ExternalEncoder;
pub use handcrafted::{HandcraftedFeaturizer, HANDCRAFTED_DIM};
pub use hashing::HashingEncoder;
pub use static_vectors::StaticVectorEncoder;
pub use token::{
    finetune_mlm, mlm_loss, MlmSchedule, Pooling, TokenEncoder, TokenEncoderConfig, CLS, MASK, SEP,
};

use ndarray::Array2;

use crate::Result;

pub trait SentenceEncoder: Send + Sync {
    /// Fingerprint of weights and preprocessing.
    fn encoder_id(&self) -> String;

    fn dim(&self) -> usize;

    /// One row per input sentence. Context-aware encoders treat the batch as
    /// one document in reading order.
    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>>;
}

impl<T: SentenceEncoder + ?Sized> SentenceEncoder for Box<T> {
    fn encoder_id(&self) -> String {
        (**self).encoder_id()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>> {
        (**self).encode(sentences)
    }
}
