//! The procedural prior: a seeded sampler of valid buildings over a
//! synthetic asset catalog, and HSV color augmentation.

mod augment;
mod catalog;
mod config;
mod sampler;

pub use augment::augment_colors;
pub use catalog::{
    build_catalog, AssetCatalog, AssetDef, AssetKind, AssetParams, Material, DEFAULT_CATALOG_SIZE, MIN_CATALOG_SIZE,
};
pub use config::PriorConfig;
pub use sampler::{minimal_building, sample, sample_with_report, Sampled, MAX_ATTEMPTS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PriorError {
    #[error("catalog size {size} is below the minimum of {min}")]
    CatalogTooSmall { size: usize, min: usize },
    #[error("invalid prior config: {0}")]
    InvalidConfig(String),
}
