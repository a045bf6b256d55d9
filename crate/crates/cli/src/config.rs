use std::path::Path;

use anyhow::{bail, Context, Result};
use procinv_core::dataset::DatasetConfig;
use procinv_core::decode::DecodeConfig;
use procinv_core::prior::{PriorConfig, DEFAULT_CATALOG_SIZE};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Settings shared by all subcommands. Loaded from `--config` (TOML or JSON),
/// then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub seed: u64,
    pub catalog_seed: u64,
    pub catalog_size: usize,
    /// Surface samples per square meter when rendering.
    pub density: f64,
    pub records_per_building: u64,
    pub records_per_shard: u64,
    pub holdout_fraction: f64,
    pub split_seed: u64,
    pub prior: PriorConfig,
    pub decode: DecodeConfig,
    /// Program and arguments of an external bridge policy.
    pub bridge_command: Vec<String>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let d = DatasetConfig::default();
        CliConfig {
            seed: 0,
            catalog_seed: d.catalog_seed,
            catalog_size: DEFAULT_CATALOG_SIZE,
            density: d.density,
            records_per_building: d.records_per_building,
            records_per_shard: d.records_per_shard,
            holdout_fraction: 0.05,
            split_seed: 0,
            prior: PriorConfig::default(),
            decode: DecodeConfig::default(),
            bridge_command: Vec::new(),
        }
    }
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            Some("toml") => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => bail!("config {} must end in .toml or .json", path.display()),
        };
        Ok(cfg)
    }

    pub fn dataset(&self) -> DatasetConfig {
        DatasetConfig {
            prior: self.prior.clone(),
            catalog_seed: self.catalog_seed,
            catalog_size: self.catalog_size,
            density: self.density,
            records_per_building: self.records_per_building,
            records_per_shard: self.records_per_shard,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
