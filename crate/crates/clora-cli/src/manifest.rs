//! Run manifests: everything needed to reproduce a run bit for bit, written
//! to the output directory before any training starts. Deliberately free of
//! timestamps so reruns produce identical files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use clora_core::{ModelConfig, Result, TrainConfig};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    /// Artifact name -> path, for everything the command writes.
    pub artifacts: BTreeMap<String, String>,
    /// Command-specific settings (sweep axis, permutation count, ...).
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &'static str, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command,
            seed,
            data_path: None,
            data_sha256: None,
            checkpoint_path: None,
            checkpoint_sha256: None,
            model: None,
            train: None,
            artifacts: BTreeMap::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Record an input file with its content hash.
    pub fn with_data(mut self, path: &Path) -> Result<Self> {
        self.data_sha256 = Some(sha256_file(path)?);
        self.data_path = Some(path.display().to_string());
        Ok(self)
    }

    pub fn with_checkpoint(mut self, path: &Path) -> Result<Self> {
        self.checkpoint_sha256 = Some(sha256_file(path)?);
        self.checkpoint_path = Some(path.display().to_string());
        Ok(self)
    }

    pub fn with_model(mut self, model: ModelConfig) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_train(mut self, train: TrainConfig) -> Self {
        self.train = Some(train);
        self
    }

    pub fn artifact(mut self, name: &str, path: &Path) -> Self {
        self.artifacts
            .insert(name.to_string(), path.display().to_string());
        self
    }

    pub fn note(mut self, key: &str, value: impl std::fmt::Display) -> Self {
        self.extra.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
