use ndarray::Array2;

use super::SentenceEncoder;
use crate::util::{fnv1a, word_tokens};
use crate::{Error, Result};

/// Signed feature hashing of word unigrams (and optionally bigrams),
/// L2-normalised. Needs no training data and is fully deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashingEncoder {
    dim: usize,
    bigrams: bool,
}

impl HashingEncoder {
    pub fn new(dim: usize, bigrams: bool) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("hashing encoder dim must be positive".into()));
        }
        Ok(Self { dim, bigrams })
    }

    fn add(&self, row: &mut [f32], feature: &str) {
        let h = fnv1a(feature.as_bytes());
        let idx = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        row[idx] += sign;
    }
}

impl SentenceEncoder for HashingEncoder {
    fn encoder_id(&self) -> String {
        format!("hashing-v1:d{}:bigrams={}", self.dim, self.bigrams)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>> {
        let mut out = Array2::<f32>::zeros((sentences.len(), self.dim));
        for (i, s) in sentences.iter().enumerate() {
            let tokens = word_tokens(s);
            let mut row = vec![0.0f32; self.dim];
            for t in &tokens {
                self.add(&mut row, t);
            }
            if self.bigrams {
                for w in tokens.windows(2) {
                    self.add(&mut row, &format!("{} {}", w[0], w[1]));
                }
            }
            let norm = row.iter().map(|v| v * v).sum::<f32>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&row));
        }
        Ok(out)
    }
}
