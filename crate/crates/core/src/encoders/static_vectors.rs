use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;

use super::SentenceEncoder;
use crate::util::{sha256_hex, word_tokens};
use crate::{Error, Result};

/// Averages externally trained word vectors over a sentence's tokens.
///
/// The vector file is plain text, one `word v1 v2 ...` entry per line; an
/// optional first line `count dim` is skipped.
#[derive(Debug, Clone)]
pub struct StaticVectorEncoder {
    dim: usize,
    vectors: HashMap<String, Vec<f32>>,
    fingerprint: String,
}

impl StaticVectorEncoder {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (lineno, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if lineno == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let values: Vec<f32> = fields[1..]
                .iter()
                .map(|f| f.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    context: format!("word vectors line {}", lineno + 1),
                    message: e.to_string(),
                })?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::DimensionMismatch {
                        context: format!("word vectors line {}", lineno + 1),
                        expected: d,
                        actual: values.len(),
                    })
                }
                _ => {}
            }
            vectors.insert(fields[0].to_lowercase(), values);
        }
        let dim = dim.filter(|d| *d > 0).ok_or_else(|| Error::InvalidInput("no word vectors".into()))?;
        Ok(Self {
            dim,
            vectors,
            fingerprint: sha256_hex(text.as_bytes())[..16].to_string(),
        })
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vectors.len()
    }
}

impl SentenceEncoder for StaticVectorEncoder {
    fn encoder_id(&self) -> String {
        format!("static:{}:d{}", self.fingerprint, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentences: &[&str]) -> Result<Array2<f32>> {
        let mut out = Array2::<f32>::zeros((sentences.len(), self.dim));
        for (i, s) in sentences.iter().enumerate() {
            let mut count = 0;
            for t in word_tokens(s) {
                if let Some(v) = self.vectors.get(&t) {
                    let mut row = out.row_mut(i);
                    row += &ndarray::ArrayView1::from(v.as_slice());
                    count += 1;
                }
            }
            if count > 0 {
                out.row_mut(i).mapv_inplace(|v| v / count as f32);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_known_words() {
        let e = StaticVectorEncoder::parse("3 2\ncourt 1 0\nappeal 0 1\nthe 1 1\n").unwrap();
        assert_eq!(e.dim(), 2);
        let m = e.encode(&["The Court", "unknown words", "appeal"]).unwrap();
        assert_eq!(m.row(0).to_vec(), vec![1.0, 0.5]);
        assert_eq!(m.row(1).to_vec(), vec![0.0, 0.0]);
        assert_eq!(m.row(2).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn rejects_ragged_file() {
        assert!(StaticVectorEncoder::parse("a 1 2\nb 1\n").is_err());
        assert!(StaticVectorEncoder::parse("").is_err());
    }
}
