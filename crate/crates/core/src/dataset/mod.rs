//! Paired (building, point cloud) records on disk: generation, splits and
//! streaming.
//!
//! A dataset directory holds `shard-NNNNN.bin` files (see [`shard`]), the
//! vocabulary manifest `vocab.json`, `run.json` naming the seed and config
//! that own the shards, and `manifest.json`, which is written last and so
//! marks a finished run.

mod binary;
pub mod shard;

pub use binary::{building_from_bytes, building_to_bytes, BUILDING_FORMAT_VERSION};

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{Codec, CodecError, TokenSequence, MAX_SEQUENCE_LENGTH};
use crate::prior::{augment_colors, build_catalog, sample_with_report, AssetCatalog, PriorConfig, PriorError};
use crate::render::{read_ply, render, write_ply, PlyError, PointCloud, RenderError};
use crate::schema::BuildingAbstraction;
use crate::seed;
use shard::{RecordPayload, ShardReader, ShardWriter};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VOCAB_FILE: &str = "vocab.json";
pub const RUN_FILE: &str = "run.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("writing record {record}: {source}")]
    Write { record: u64, source: std::io::Error },
    #[error("record {record} is corrupt: {reason}")]
    Corrupt { record: u64, reason: String },
    #[error("{0}")]
    Format(String),
    #[error("record {record}: {source}")]
    Codec { record: u64, source: CodecError },
    #[error("record {record}: {source}")]
    Render { record: u64, source: RenderError },
    #[error("record {record}: {source}")]
    Ply { record: u64, source: PlyError },
    #[error("record {record}: token sequence of {len} exceeds {MAX_SEQUENCE_LENGTH}")]
    TooLong { record: u64, len: usize },
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("dataset has no {0:?} split assignment")]
    MissingSplit(Split),
    #[error("holdout fraction {0} is outside (0, 1)")]
    Fraction(f64),
    #[error("invalid dataset config: {0}")]
    Config(String),
}

/// Everything that determines the bytes of a dataset besides `n` and the
/// base seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub prior: PriorConfig,
    pub catalog_seed: u64,
    pub catalog_size: usize,
    /// Surface samples per square meter.
    pub density: f64,
    /// Point clouds rendered per sampled building.
    pub records_per_building: u64,
    pub records_per_shard: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            prior: PriorConfig::default(),
            catalog_seed: 0,
            catalog_size: crate::prior::DEFAULT_CATALOG_SIZE,
            density: 4.0,
            records_per_building: 1,
            records_per_shard: 256,
        }
    }
}

impl DatasetConfig {
    pub fn check(&self) -> Result<(), DatasetError> {
        self.prior.check()?;
        if !(self.density.is_finite() && self.density > 0.0) {
            return Err(DatasetError::Config(format!("density {} must be positive", self.density)));
        }
        if self.records_per_building == 0 || self.records_per_shard == 0 {
            return Err(DatasetError::Config("records_per_building and records_per_shard must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

/// Per-record generation facts; with the config they regenerate the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMetadata {
    pub record_id: u64,
    pub building_index: u64,
    pub building_seed: u64,
    pub render_seed: u64,
    pub augmented: bool,
    pub hsv_sigma: f64,
    pub prior_attempts: u64,
    pub prior_fallback: bool,
    pub config_hash: String,
    pub vocab_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u64,
    pub building: BuildingAbstraction,
    pub tokens: TokenSequence,
    pub cloud: PointCloud,
    pub metadata: RecordMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    All,
    Train,
    Holdout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardInfo {
    pub file: String,
    pub first_record: u64,
    pub count: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub seed: u64,
    pub holdout_fraction: f64,
    pub train: Vec<u64>,
    pub holdout: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub record_count: u64,
    pub base_seed: u64,
    pub augmented_count: u64,
    pub config_hash: String,
    pub vocab_hash: String,
    pub catalog_seed: u64,
    pub catalog_hash: String,
    pub config: DatasetConfig,
    pub shards: Vec<ShardInfo>,
    pub splits: Option<Splits>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| DatasetError::Io { path, source: e })?;
        let m: DatasetManifest = serde_json::from_str(&text).map_err(|e| DatasetError::Manifest(e.to_string()))?;
        if m.version != MANIFEST_VERSION {
            return Err(DatasetError::Manifest(format!("version {}, expected {MANIFEST_VERSION}", m.version)));
        }
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| DatasetError::Io { path, source: e })
    }

    /// Record ids of a split in stable ascending order.
    pub fn ids(&self, split: Split) -> Result<Vec<u64>, DatasetError> {
        match (split, &self.splits) {
            (Split::All, _) => Ok((0..self.record_count).collect()),
            (Split::Train, Some(s)) => Ok(s.train.clone()),
            (Split::Holdout, Some(s)) => Ok(s.holdout.clone()),
            (_, None) => Err(DatasetError::MissingSplit(split)),
        }
    }
}

/// Whether record `i` carries HSV augmentation; over `n` records exactly
/// `floor(n * fraction)` do. For one half these are the odd ids.
pub fn is_augmented(i: u64, fraction: f64) -> bool {
    ((i + 1) as f64 * fraction).floor() > (i as f64 * fraction).floor()
}

pub fn shard_file(index: u64) -> String {
    format!("shard-{index:05}.bin")
}

struct Generator<'a> {
    cfg: &'a DatasetConfig,
    catalog: AssetCatalog,
    codec: Codec,
    config_hash: String,
    base_seed: u64,
}

impl Generator<'_> {
    fn record(&self, id: u64) -> Result<Vec<u8>, DatasetError> {
        let building_index = id / self.cfg.records_per_building;
        let building_seed = self.base_seed.wrapping_add(building_index);
        let render_seed = self.base_seed.wrapping_add(id);
        let sampled = sample_with_report(building_seed, &self.cfg.prior, &self.catalog);
        let augmented = is_augmented(id, self.cfg.prior.augmented_fraction);
        let b =
            if augmented { augment_colors(&sampled.building, render_seed, self.cfg.prior.hsv_sigma) } else { sampled.building };
        let building = self.codec.quantize_building(&b).map_err(|source| DatasetError::Codec { record: id, source })?;
        let tokens = self.codec.encode(&building).map_err(|source| DatasetError::Codec { record: id, source })?;
        if tokens.len() > MAX_SEQUENCE_LENGTH {
            return Err(DatasetError::TooLong { record: id, len: tokens.len() });
        }
        let cloud = render(&building, &self.catalog, self.cfg.density, render_seed)
            .map_err(|source| DatasetError::Render { record: id, source })?;
        let metadata = RecordMetadata {
            record_id: id,
            building_index,
            building_seed,
            render_seed,
            augmented,
            hsv_sigma: if augmented { self.cfg.prior.hsv_sigma } else { 0.0 },
            prior_attempts: sampled.attempts,
            prior_fallback: sampled.fallback,
            config_hash: self.config_hash.clone(),
            vocab_hash: self.codec.vocab().hash(),
        };
        Ok(RecordPayload {
            id,
            building: building_to_bytes(&building),
            tokens: tokens.to_bytes(),
            ply: write_ply(&cloud),
            metadata: serde_json::to_vec(&metadata).expect("metadata serializes"),
        }
        .to_bytes())
    }
}

/// Outcome of [`generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateReport {
    pub manifest: DatasetManifest,
    /// Records found intact on disk and kept.
    pub reused: u64,
    pub written: u64,
}

fn sha256_file(path: &Path) -> Result<String, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| DatasetError::Io { path: path.to_path_buf(), source: e })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Records which inputs own the shards in `dir`, so a resumed run never
/// mixes records of different datasets.
fn claim_directory(dir: &Path, base_seed: u64, config_hash: &str) -> Result<(), DatasetError> {
    let path = dir.join(RUN_FILE);
    let claim = serde_json::json!({ "base_seed": base_seed, "config_hash": config_hash }).to_string();
    match std::fs::read_to_string(&path) {
        Ok(existing) if existing == claim => Ok(()),
        Ok(_) => Err(DatasetError::Config(format!("{} was generated with a different seed or config", dir.display()))),
        Err(_) => std::fs::write(&path, claim).map_err(|e| DatasetError::Io { path, source: e }),
    }
}

/// Generates `n` records with seeds derived from `base_seed` into `dir`.
///
/// Records are produced in parallel and written by a single sink in id
/// order. Existing shards are reused: complete ones as they are, partial ones
/// from their last intact record. The output does not depend on how often
/// the run was interrupted.
pub fn generate(dir: &Path, n: u64, base_seed: u64, cfg: &DatasetConfig) -> Result<GenerateReport, DatasetError> {
    if n == 0 {
        return Err(DatasetError::Config("record count must be at least 1".into()));
    }
    cfg.check()?;
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io { path: dir.to_path_buf(), source: e })?;
    let catalog = build_catalog(cfg.catalog_seed, cfg.catalog_size)?;
    let codec = Codec::for_catalog(catalog.len());
    let vocab_path = dir.join(VOCAB_FILE);
    std::fs::write(&vocab_path, codec.vocab().manifest_json()).map_err(|e| DatasetError::Io { path: vocab_path, source: e })?;
    let gen = Generator { cfg, catalog, codec, config_hash: cfg.hash(), base_seed };
    claim_directory(dir, base_seed, &gen.config_hash)?;

    let per_shard = cfg.records_per_shard;
    let mut shards = Vec::new();
    let (mut reused, mut written) = (0, 0);
    for shard_index in 0..n.div_ceil(per_shard) {
        let first = shard_index * per_shard;
        let count = per_shard.min(n - first);
        let name = shard_file(shard_index);
        let path = dir.join(&name);
        let complete = std::fs::read(&path)
            .ok()
            .and_then(|bytes| shard::decode_footer(&bytes).ok())
            .is_some_and(|entries| entries.len() as u64 == count && entries.iter().zip(first..).all(|(e, id)| e.id == id));
        if complete {
            reused += count;
        } else {
            let mut w = if path.exists() {
                ShardWriter::resume(&path, shard_index as u32, first)?
            } else {
                ShardWriter::create(&path, shard_index as u32)?
            };
            if w.len() as u64 > count {
                w = ShardWriter::create(&path, shard_index as u32)?;
            }
            let kept = w.len() as u64;
            reused += kept;
            // Bounded batches keep memory flat and make interruption cheap.
            let batch = rayon::current_num_threads().max(1) as u64 * 4;
            let mut next = first + kept;
            while next < first + count {
                let end = (next + batch).min(first + count);
                let payloads: Vec<Result<Vec<u8>, DatasetError>> = (next..end).into_par_iter().map(|id| gen.record(id)).collect();
                for (id, payload) in (next..end).zip(payloads) {
                    w.append(id, &payload?)?;
                    written += 1;
                }
                w.flush()?;
                log::debug!("{name}: {end}/{n} records");
                next = end;
            }
            w.finish()?;
        }
        shards.push(ShardInfo { sha256: sha256_file(&path)?, file: name, first_record: first, count });
    }

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        record_count: n,
        base_seed,
        augmented_count: (0..n).filter(|&i| is_augmented(i, cfg.prior.augmented_fraction)).count() as u64,
        config_hash: gen.config_hash.clone(),
        vocab_hash: gen.codec.vocab().hash(),
        catalog_seed: cfg.catalog_seed,
        catalog_hash: gen.catalog.hash(),
        config: cfg.clone(),
        shards,
        splits: None,
    };
    manifest.save(dir)?;
    Ok(GenerateReport { manifest, reused, written })
}

/// Regenerates a single record's payload bytes from the manifest.
pub fn regenerate_record(manifest: &DatasetManifest, id: u64) -> Result<Vec<u8>, DatasetError> {
    let cfg = &manifest.config;
    let catalog = build_catalog(cfg.catalog_seed, cfg.catalog_size)?;
    let codec = Codec::for_catalog(catalog.len());
    Generator { cfg, catalog, codec, config_hash: cfg.hash(), base_seed: manifest.base_seed }.record(id)
}

/// Seeded holdout assignment of `round(fraction * n)` records.
pub fn split(manifest: &DatasetManifest, holdout_fraction: f64, seed: u64) -> Result<DatasetManifest, DatasetError> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(DatasetError::Fraction(holdout_fraction));
    }
    let n = manifest.record_count as usize;
    let k = (holdout_fraction * n as f64).round() as usize;
    let mut rng = seed::rng(seed, seed::stream::SPLIT);
    let mut in_holdout = vec![false; n];
    for i in index::sample(&mut rng, n, k) {
        in_holdout[i] = true;
    }
    let (holdout, train): (Vec<u64>, Vec<u64>) = (0..n as u64).partition(|&i| in_holdout[i as usize]);
    let mut out = manifest.clone();
    out.splits = Some(Splits { seed, holdout_fraction, train, holdout });
    Ok(out)
}

fn decode_record(payload: RecordPayload) -> Result<DatasetRecord, DatasetError> {
    let id = payload.id;
    let corrupt = |reason: String| DatasetError::Corrupt { record: id, reason };
    let building = building_from_bytes(&payload.building).map_err(|e| corrupt(e.to_string()))?;
    let tokens = TokenSequence::from_bytes(&payload.tokens).map_err(|e| corrupt(e.to_string()))?;
    let cloud = read_ply(&payload.ply).map_err(|source| DatasetError::Ply { record: id, source })?;
    let metadata: RecordMetadata = serde_json::from_slice(&payload.metadata).map_err(|e| corrupt(format!("metadata: {e}")))?;
    if metadata.record_id != id {
        return Err(corrupt(format!("metadata names record {}", metadata.record_id)));
    }
    Ok(DatasetRecord { id, building, tokens, cloud, metadata })
}

/// Lazy, batched reader over one split. Each item is a batch whose entries
/// fail individually, so a corrupt record does not end the pass.
pub struct RecordStream {
    dir: PathBuf,
    manifest: DatasetManifest,
    ids: Vec<u64>,
    batch: usize,
    position: usize,
    readers: HashMap<u64, ShardReader>,
}

pub fn stream(dir: &Path, manifest: &DatasetManifest, split: Split, batch: usize) -> Result<RecordStream, DatasetError> {
    if batch == 0 {
        return Err(DatasetError::Config("batch size must be at least 1".into()));
    }
    Ok(RecordStream {
        dir: dir.to_path_buf(),
        manifest: manifest.clone(),
        ids: manifest.ids(split)?,
        batch,
        position: 0,
        readers: HashMap::new(),
    })
}

impl RecordStream {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    fn read(&mut self, id: u64) -> Result<DatasetRecord, DatasetError> {
        let per_shard = self.manifest.config.records_per_shard;
        let shard_index = id / per_shard;
        let info = self
            .manifest
            .shards
            .get(shard_index as usize)
            .ok_or_else(|| DatasetError::Corrupt { record: id, reason: "no shard holds this record".into() })?;
        if !self.readers.contains_key(&shard_index) {
            let r = ShardReader::open(&self.dir.join(&info.file), shard_index as u32)
                .map_err(|e| DatasetError::Corrupt { record: id, reason: e.to_string() })?;
            self.readers.insert(shard_index, r);
        }
        let reader = self.readers.get_mut(&shard_index).expect("inserted above");
        let entry = reader
            .entries()
            .get((id - info.first_record) as usize)
            .copied()
            .filter(|e| e.id == id)
            .ok_or_else(|| DatasetError::Corrupt { record: id, reason: "missing from shard index".into() })?;
        decode_record(reader.read(&entry)?)
    }
}

impl Iterator for RecordStream {
    type Item = Vec<Result<DatasetRecord, DatasetError>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.position >= self.ids.len() {
            return None;
        }
        let end = (self.position + self.batch).min(self.ids.len());
        let ids = self.ids[self.position..end].to_vec();
        self.position = end;
        Some(ids.into_iter().map(|id| self.read(id)).collect())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub records: u64,
    pub augmented: u64,
    /// Records whose tokens differ from the encoding of their building.
    pub token_mismatches: Vec<u64>,
    pub corrupt: Vec<u64>,
}

/// Full scan: every record decodes and its tokens re-encode from its building.
pub fn verify(dir: &Path) -> Result<VerifyReport, DatasetError> {
    let manifest = DatasetManifest::load(dir)?;
    let codec = Codec::for_catalog(manifest.config.catalog_size);
    let mut report = VerifyReport::default();
    for batch in stream(dir, &manifest, Split::All, 64)? {
        for r in batch {
            report.records += 1;
            match r {
                Ok(rec) => {
                    report.augmented += rec.metadata.augmented as u64;
                    if codec.encode(&rec.building).ok().as_ref() != Some(&rec.tokens) {
                        report.token_mismatches.push(rec.id);
                    }
                }
                Err(DatasetError::Corrupt { record, .. } | DatasetError::Ply { record, .. }) => report.corrupt.push(record),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(report)
}
