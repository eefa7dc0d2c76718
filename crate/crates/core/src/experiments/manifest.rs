use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::util::{file_checksum, sha256_hex};
use crate::Result;

/// Everything needed to re-derive a result file: what ran, with which
/// config and seeds, on which exact inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_seed: Option<u64>,
    /// Input path → sha256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new<C: Serialize>(kind: &str, config: &C, seeds: Vec<u64>) -> Self {
        let config = serde_json::to_value(config).expect("config serializes");
        let config_hash = sha256_hex(config.to_string().as_bytes())[..16].to_string();
        Self {
            kind: kind.into(),
            config_hash,
            config,
            seeds,
            split_seed: None,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
        }
    }

    /// Records the checksum of an input file.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sum = file_checksum(path)?;
        self.inputs.insert(path.display().to_string(), sum);
        Ok(())
    }

    /// Inputs whose current checksum differs from the recorded one.
    pub fn changed_inputs(&self) -> Vec<String> {
        self.inputs
            .iter()
            .filter(|(p, sum)| file_checksum(Path::new(p)).ok().as_deref() != Some(sum.as_str()))
            .map(|(p, _)| p.clone())
            .collect()
    }

    /// Stable id over kind, config, seeds and inputs.
    pub fn run_id(&self) -> String {
        let key = serde_json::json!({
            "kind": self.kind,
            "config": self.config_hash,
            "seeds": self.seeds,
            "split_seed": self.split_seed,
            "inputs": self.inputs,
        });
        sha256_hex(key.to_string().as_bytes())[..12].to_string()
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
        crate::util::write_json(&dir.join("manifest.json"), self)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        crate::util::read_json(&dir.join("manifest.json"))
    }
}

/// Content-addressed run directory `root/<kind>-<run id>`.
pub fn content_dir(root: &Path, manifest: &RunManifest) -> PathBuf {
    root.join(format!("{}-{}", manifest.kind, manifest.run_id()))
}
