use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Semantic token groups. Continuous groups discretize a real interval on a
/// fixed grid; discrete groups enumerate indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    NoiseLevel,
    AbsoluteCoord,
    RelativeCoord,
    ScaleRotation,
    AssetIndex,
    PointerIndex,
    Control,
}

impl GroupKind {
    pub const ALL: [GroupKind; 7] = [
        GroupKind::NoiseLevel,
        GroupKind::AbsoluteCoord,
        GroupKind::RelativeCoord,
        GroupKind::ScaleRotation,
        GroupKind::AssetIndex,
        GroupKind::PointerIndex,
        GroupKind::Control,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GroupKind::NoiseLevel => "noise_level",
            GroupKind::AbsoluteCoord => "absolute_coord",
            GroupKind::RelativeCoord => "relative_coord",
            GroupKind::ScaleRotation => "scale_rotation",
            GroupKind::AssetIndex => "asset_index",
            GroupKind::PointerIndex => "pointer_index",
            GroupKind::Control => "control",
        }
    }

    /// `(lo, hi, resolution)` of the continuous groups.
    pub fn grid(self) -> Option<(f64, f64, f64)> {
        match self {
            GroupKind::NoiseLevel => Some((0.0, 1.0, 0.01)),
            GroupKind::AbsoluteCoord => Some((-100.0, 100.0, 0.1)),
            GroupKind::RelativeCoord => Some((0.0, 1.0, 0.005)),
            GroupKind::ScaleRotation => Some((-5.0, 5.0, 0.01)),
            _ => None,
        }
    }
}

/// Structural tokens. Every list item is introduced by `Item` and every list
/// is closed by `EndRepeated`; optional fields start with `Present` or `Absent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Control {
    EndRepeated,
    Item,
    Present,
    Absent,
}

impl Control {
    pub const ALL: [Control; 4] = [Control::EndRepeated, Control::Item, Control::Present, Control::Absent];

    pub fn name(self) -> &'static str {
        match self {
            Control::EndRepeated => "END_REPEATED",
            Control::Item => "ITEM",
            Control::Present => "PRESENT",
            Control::Absent => "ABSENT",
        }
    }

    fn local(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenGroup {
    pub name: GroupKind,
    pub lo: f64,
    pub hi: f64,
    pub resolution: Option<f64>,
    pub cardinality: u32,
    pub offset: u32,
}

impl TokenGroup {
    pub fn contains(&self, id: u32) -> bool {
        id >= self.offset && id < self.offset + self.cardinality
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VocabConfig {
    pub catalog_size: u32,
    pub pointer_cardinality: u32,
}

pub const DEFAULT_POINTER_CARDINALITY: u32 = 64;

impl VocabConfig {
    pub fn new(catalog_size: usize) -> Self {
        VocabConfig { catalog_size: catalog_size as u32, pointer_cardinality: DEFAULT_POINTER_CARDINALITY }
    }
}

/// Describes the token layout produced by the building grammar; hashed into
/// the vocabulary manifest so consumers can detect incompatible encoders.
const SCHEMA_DESCRIPTOR: &str = "building/v1: noise_level height footprints[vertices[x y]] \
facades[footprint_index cells_patterns[first last cells[cell_type offset modifier?(scale_x scale_y quaternion_3 quaternion_4)]]] \
storeys[elevation facade_index] material_variations[cell_type material_slot h s v]; \
lists: ITEM-prefixed items, END_REPEATED terminated; optional: PRESENT|ABSENT";

pub fn schema_version_hash() -> String {
    hex::encode(Sha256::digest(SCHEMA_DESCRIPTOR.as_bytes()))
}

/// Group-blocked vocabulary: ids are contiguous per group, groups appear in
/// [`GroupKind::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    config: VocabConfig,
    groups: Vec<TokenGroup>,
    total_size: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabManifest {
    pub schema_version_hash: String,
    pub catalog_size: u32,
    pub pointer_cardinality: u32,
    pub total_size: u32,
    pub groups: Vec<TokenGroup>,
    pub control_tokens: Vec<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("manifest is not valid JSON: {0}")]
    Json(String),
    #[error("schema version {found} does not match {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error("manifest layout disagrees with the vocabulary it describes")]
    LayoutMismatch,
}

impl Vocabulary {
    pub fn new(config: VocabConfig) -> Self {
        let mut groups = Vec::with_capacity(GroupKind::ALL.len());
        let mut offset = 0u32;
        for kind in GroupKind::ALL {
            let (lo, hi, resolution, cardinality) = match kind.grid() {
                Some((lo, hi, res)) => (lo, hi, Some(res), ((hi - lo) / res).round() as u32 + 1),
                None => {
                    let card = match kind {
                        GroupKind::AssetIndex => config.catalog_size,
                        GroupKind::PointerIndex => config.pointer_cardinality,
                        _ => Control::ALL.len() as u32,
                    };
                    (0.0, card.saturating_sub(1) as f64, None, card)
                }
            };
            groups.push(TokenGroup { name: kind, lo, hi, resolution, cardinality, offset });
            offset += cardinality;
        }
        Vocabulary { config, groups, total_size: offset }
    }

    pub fn for_catalog(catalog_size: usize) -> Self {
        Self::new(VocabConfig::new(catalog_size))
    }

    pub fn config(&self) -> VocabConfig {
        self.config
    }

    pub fn size(&self) -> usize {
        self.total_size as usize
    }

    pub fn groups(&self) -> &[TokenGroup] {
        &self.groups
    }

    pub fn group(&self, kind: GroupKind) -> &TokenGroup {
        &self.groups[kind as usize]
    }

    pub fn token(&self, kind: GroupKind, local: u32) -> u32 {
        let g = self.group(kind);
        debug_assert!(local < g.cardinality);
        g.offset + local
    }

    pub fn control(&self, c: Control) -> u32 {
        self.token(GroupKind::Control, c.local())
    }

    /// Group and group-local index of a token id.
    pub fn classify(&self, id: u32) -> Option<(GroupKind, u32)> {
        self.groups.iter().find(|g| g.contains(id)).map(|g| (g.name, id - g.offset))
    }

    pub fn as_control(&self, id: u32) -> Option<Control> {
        match self.classify(id)? {
            (GroupKind::Control, local) => Control::ALL.get(local as usize).copied(),
            _ => None,
        }
    }

    /// Local grid index of `v` in a continuous group, clamping out-of-range values.
    pub fn quantize_local(&self, v: f64, kind: GroupKind) -> u32 {
        let (lo, hi, res) = kind.grid().expect("continuous group");
        let card = self.group(kind).cardinality;
        let clamped = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        if (v - clamped).abs() > res {
            log::warn!("{} value {v} outside [{lo}, {hi}], clamped", kind.name());
        }
        (((clamped - lo) / res).round() as i64).clamp(0, card as i64 - 1) as u32
    }

    pub fn quantize(&self, v: f64, kind: GroupKind) -> u32 {
        self.token(kind, self.quantize_local(v, kind))
    }

    pub fn dequantize_local(&self, kind: GroupKind, local: u32) -> f64 {
        let (lo, _, res) = kind.grid().expect("continuous group");
        lo + local as f64 * res
    }

    /// Snap a value to the grid of a continuous group.
    pub fn snap(&self, v: f64, kind: GroupKind) -> f64 {
        self.dequantize_local(kind, self.quantize_local(v, kind))
    }

    pub fn manifest(&self) -> VocabManifest {
        VocabManifest {
            schema_version_hash: schema_version_hash(),
            catalog_size: self.config.catalog_size,
            pointer_cardinality: self.config.pointer_cardinality,
            total_size: self.total_size,
            groups: self.groups.clone(),
            control_tokens: Control::ALL.iter().map(|c| c.name().to_string()).collect(),
        }
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest()).expect("manifest serializes")
    }

    /// SHA-256 of the manifest JSON; identifies the token layout.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.manifest_json().as_bytes()))
    }

    /// Rebuilds a vocabulary from a manifest, refusing anything that does not
    /// match the layout this crate would produce for the same configuration.
    pub fn from_manifest_json(text: &str) -> Result<Self, ManifestError> {
        let m: VocabManifest = serde_json::from_str(text).map_err(|e| ManifestError::Json(e.to_string()))?;
        let expected = schema_version_hash();
        if m.schema_version_hash != expected {
            return Err(ManifestError::SchemaMismatch { expected, found: m.schema_version_hash });
        }
        if m.catalog_size == 0 || m.pointer_cardinality == 0 || m.catalog_size > 1 << 20 || m.pointer_cardinality > 1 << 20 {
            return Err(ManifestError::LayoutMismatch);
        }
        let v = Vocabulary::new(VocabConfig { catalog_size: m.catalog_size, pointer_cardinality: m.pointer_cardinality });
        if v.manifest() != m {
            return Err(ManifestError::LayoutMismatch);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::for_catalog(64)
    }

    #[test]
    fn continuous_cardinalities() {
        let v = vocab();
        assert_eq!(v.group(GroupKind::NoiseLevel).cardinality, 101);
        assert_eq!(v.group(GroupKind::AbsoluteCoord).cardinality, 2001);
        assert_eq!(v.group(GroupKind::RelativeCoord).cardinality, 201);
        assert_eq!(v.group(GroupKind::ScaleRotation).cardinality, 1001);
        assert_eq!(v.group(GroupKind::AssetIndex).cardinality, 64);
        assert_eq!(v.group(GroupKind::PointerIndex).cardinality, 64);
        assert_eq!(v.group(GroupKind::Control).cardinality, 4);
        assert_eq!(v.size(), 101 + 2001 + 201 + 1001 + 64 + 64 + 4);
    }

    #[test]
    fn groups_are_contiguous_and_disjoint() {
        let v = vocab();
        let mut next = 0;
        for g in v.groups() {
            assert_eq!(g.offset, next);
            next += g.cardinality;
        }
        for id in 0..v.size() as u32 {
            let (kind, local) = v.classify(id).unwrap();
            assert_eq!(v.token(kind, local), id);
        }
        assert!(v.classify(v.size() as u32).is_none());
    }

    #[test]
    fn quantize_examples() {
        let v = vocab();
        assert_eq!(v.quantize_local(0.0, GroupKind::NoiseLevel), 0);
        assert_eq!(v.quantize_local(100.0, GroupKind::AbsoluteCoord), 2000);
        assert_eq!(v.quantize_local(0.073, GroupKind::RelativeCoord), 15);
        assert!((v.dequantize_local(GroupKind::RelativeCoord, 15) - 0.075).abs() < 1e-12);
        assert_eq!(v.quantize(0.0, GroupKind::NoiseLevel), v.group(GroupKind::NoiseLevel).offset);
    }

    #[test]
    fn clamping() {
        let v = vocab();
        assert_eq!(v.quantize_local(250.0, GroupKind::AbsoluteCoord), 2000);
        assert_eq!(v.quantize_local(-7.0, GroupKind::ScaleRotation), 0);
        assert_eq!(v.quantize_local(f64::NAN, GroupKind::RelativeCoord), 0);
    }

    #[test]
    fn manifest_round_trip_and_determinism() {
        let v = vocab();
        assert_eq!(v.manifest_json(), vocab().manifest_json());
        assert_eq!(v.hash(), vocab().hash());
        let back = Vocabulary::from_manifest_json(&v.manifest_json()).unwrap();
        assert_eq!(back, v);
        let other = Vocabulary::for_catalog(12);
        assert_ne!(other.hash(), v.hash());
        let mut m = v.manifest();
        m.groups[1].offset += 1;
        assert_eq!(Vocabulary::from_manifest_json(&serde_json::to_string(&m).unwrap()), Err(ManifestError::LayoutMismatch));
    }

    proptest::proptest! {
        #[test]
        fn quantization_error_bounded(v in -200.0f64..200.0, g in 0usize..4) {
            let kind = GroupKind::ALL[g];
            let voc = vocab();
            let (lo, hi, res) = kind.grid().unwrap();
            let back = voc.snap(v, kind);
            proptest::prop_assert!((back - v.clamp(lo, hi)).abs() <= res / 2.0 + 1e-9);
            // Snapping is idempotent on the grid.
            proptest::prop_assert_eq!(voc.quantize_local(back, kind), voc.quantize_local(v, kind));
        }
    }
}
