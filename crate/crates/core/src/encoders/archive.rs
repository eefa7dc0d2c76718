//! Directory of per-document embedding matrices plus a `manifest.json`.
//!
//! Each record file holds a 16-byte header (8-byte magic, u32 row count,
//! u32 width) followed by row-major little-endian f32 values.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SentenceEncoder;
use crate::corpus::DocumentRecord;
use crate::util::{f32_bytes, f32_from_bytes, fnv1a, sha256_hex};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"RRSEGEMB";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub rows: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub encoder_id: String,
    pub dim: usize,
    pub docs: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingArchive {
    dir: PathBuf,
    manifest: ArchiveManifest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodeStats {
    pub encoded: usize,
    pub skipped: usize,
}

fn record_file_name(doc_id: &str) -> String {
    let safe: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .take(64)
        .collect();
    format!("{safe}-{:016x}.bin", fnv1a(doc_id.as_bytes()))
}

fn encode_record(m: &Array2<f32>) -> Vec<u8> {
    let mut blob = Vec::with_capacity(16 + 4 * m.len());
    blob.extend_from_slice(MAGIC);
    blob.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    blob.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    let values: Vec<f32> = m.iter().copied().collect();
    blob.extend_from_slice(&f32_bytes(&values));
    blob
}

fn decode_record(blob: &[u8], path: &Path) -> Result<Array2<f32>> {
    let bad = |m: &str| Error::Archive(format!("{}: {m}", path.display()));
    if blob.len() < 16 || &blob[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let n = u32::from_le_bytes(blob[8..12].try_into().expect("4 bytes")) as usize;
    let dim = u32::from_le_bytes(blob[12..16].try_into().expect("4 bytes")) as usize;
    let values = f32_from_bytes(&blob[16..])?;
    if values.len() != n * dim {
        return Err(bad("payload size does not match header"));
    }
    Array2::from_shape_vec((n, dim), values).map_err(|e| bad(&e.to_string()))
}

impl EmbeddingArchive {
    /// Opens the archive at `dir`, creating it when absent. An existing
    /// archive must have the same encoder id and width.
    pub fn open_or_create(dir: &Path, encoder_id: &str, dim: usize) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        if manifest_path.exists() {
            let archive = Self::open(dir)?;
            if archive.manifest.dim != dim {
                return Err(Error::DimensionMismatch {
                    context: format!("archive {}", dir.display()),
                    expected: archive.manifest.dim,
                    actual: dim,
                });
            }
            if archive.manifest.encoder_id != encoder_id {
                return Err(Error::Archive(format!(
                    "{} holds embeddings from {}, not {encoder_id}",
                    dir.display(),
                    archive.manifest.encoder_id
                )));
            }
            return Ok(archive);
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let archive = Self {
            dir: dir.to_path_buf(),
            manifest: ArchiveManifest {
                encoder_id: encoder_id.to_string(),
                dim,
                docs: BTreeMap::new(),
            },
        };
        archive.save_manifest()?;
        Ok(archive)
    }

    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = crate::util::read_json(&dir.join("manifest.json"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
        })
    }

    pub fn manifest(&self) -> &ArchiveManifest {
        &self.manifest
    }

    pub fn encoder_id(&self) -> &str {
        &self.manifest.encoder_id
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.manifest.docs.contains_key(doc_id)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.manifest.docs.keys().map(String::as_str)
    }

    fn save_manifest(&self) -> Result<()> {
        crate::util::write_json(&self.dir.join("manifest.json"), &self.manifest)
    }

    /// Writes one document's matrix and records it in the manifest.
    pub fn write(&mut self, doc_id: &str, matrix: &Array2<f32>) -> Result<()> {
        self.put(doc_id, matrix)?;
        self.save_manifest()
    }

    fn put(&mut self, doc_id: &str, matrix: &Array2<f32>) -> Result<()> {
        if matrix.ncols() != self.manifest.dim {
            return Err(Error::DimensionMismatch {
                context: format!("embeddings of {doc_id}"),
                expected: self.manifest.dim,
                actual: matrix.ncols(),
            });
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("embeddings of {doc_id}")));
        }
        let file = record_file_name(doc_id);
        let blob = encode_record(matrix);
        let path = self.dir.join(&file);
        fs::write(&path, &blob).map_err(|e| Error::io(&path, e))?;
        self.manifest.docs.insert(
            doc_id.to_string(),
            ManifestEntry {
                rows: matrix.nrows(),
                file,
                sha256: sha256_hex(&blob),
            },
        );
        Ok(())
    }

    /// Reads and verifies one document's matrix.
    pub fn read(&self, doc_id: &str) -> Result<Array2<f32>> {
        let entry = self
            .manifest
            .docs
            .get(doc_id)
            .ok_or_else(|| Error::Archive(format!("{doc_id} not in archive {}", self.dir.display())))?;
        let path = self.dir.join(&entry.file);
        let blob = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&blob) != entry.sha256 {
            return Err(Error::Archive(format!("{} checksum mismatch", path.display())));
        }
        let m = decode_record(&blob, &path)?;
        if m.nrows() != entry.rows || m.ncols() != self.manifest.dim {
            return Err(Error::Archive(format!("{} shape disagrees with manifest", path.display())));
        }
        Ok(m)
    }

    /// True when the stored record exists, verifies, and has `rows` rows.
    pub fn is_valid(&self, doc_id: &str, rows: usize) -> bool {
        self.manifest.docs.get(doc_id).is_some_and(|e| e.rows == rows) && self.read(doc_id).is_ok()
    }
}

/// Encodes every document not already validly present in the archive at `dir`.
pub fn encode_corpus<E: SentenceEncoder + ?Sized>(
    encoder: &E,
    docs: &[DocumentRecord],
    dir: &Path,
) -> Result<(EmbeddingArchive, EncodeStats)> {
    let mut archive = EmbeddingArchive::open_or_create(dir, &encoder.encoder_id(), encoder.dim())?;
    let todo: Vec<&DocumentRecord> = docs
        .iter()
        .filter(|d| !archive.is_valid(&d.doc_id, d.len()))
        .collect();
    let skipped = docs.len() - todo.len();
    let encoded: Vec<(String, Array2<f32>)> = todo
        .par_iter()
        .map(|d| {
            let m = encoder.encode(&d.texts())?;
            if m.nrows() != d.len() || m.ncols() != encoder.dim() {
                return Err(Error::DimensionMismatch {
                    context: format!("encoder output for {}", d.doc_id),
                    expected: encoder.dim(),
                    actual: m.ncols(),
                });
            }
            Ok((d.doc_id.clone(), m))
        })
        .collect::<Result<_>>()?;
    for (doc_id, m) in &encoded {
        archive.put(doc_id, m)?;
    }
    archive.save_manifest()?;
    Ok((
        archive,
        EncodeStats {
            encoded: encoded.len(),
            skipped,
        },
    ))
}
