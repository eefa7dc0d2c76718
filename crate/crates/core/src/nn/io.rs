use std::fs;
use std::path::Path;

use crate::util::{f32_bytes, f32_from_bytes};
use crate::{Error, Result};

const WEIGHTS_MAGIC: &[u8; 8] = b"RRSEGW01";

/// Writes a flat weight vector: 8-byte magic, u64 count, little-endian f32 values.
/// Returns the bytes written so callers can checksum them.
pub fn write_weights(path: &Path, values: &[f32]) -> Result<Vec<u8>> {
    let mut blob = Vec::with_capacity(16 + 4 * values.len());
    blob.extend_from_slice(WEIGHTS_MAGIC);
    blob.extend_from_slice(&(values.len() as u64).to_le_bytes());
    blob.extend_from_slice(&f32_bytes(values));
    fs::write(path, &blob).map_err(|e| Error::io(path, e))?;
    Ok(blob)
}

/// Reads a weight file; when `sha256` is given the file must match it.
pub fn read_weights(path: &Path, sha256: Option<&str>) -> Result<Vec<f32>> {
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    if let Some(expected) = sha256 {
        if crate::util::sha256_hex(&blob) != expected {
            return Err(Error::Archive(format!("{} checksum mismatch", path.display())));
        }
    }
    if blob.len() < 16 || &blob[..8] != WEIGHTS_MAGIC {
        return Err(Error::Archive(format!("{} is not a weights file", path.display())));
    }
    let count = u64::from_le_bytes(blob[8..16].try_into().expect("8 bytes")) as usize;
    let values = f32_from_bytes(&blob[16..])?;
    if values.len() != count {
        return Err(Error::Archive(format!("{} is truncated", path.display())));
    }
    Ok(values)
}
