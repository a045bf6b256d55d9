use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PriorError;
use crate::geometry::{Mesh, P3};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    WallPanel,
    WindowPanel,
    DoorPanel,
    Cornice,
    Pillar,
    RoofTile,
}

impl AssetKind {
    pub const ALL: [AssetKind; 6] = [
        AssetKind::WallPanel,
        AssetKind::WindowPanel,
        AssetKind::DoorPanel,
        AssetKind::Cornice,
        AssetKind::Pillar,
        AssetKind::RoofTile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AssetKind::WallPanel => "wall_panel",
            AssetKind::WindowPanel => "window_panel",
            AssetKind::DoorPanel => "door_panel",
            AssetKind::Cornice => "cornice",
            AssetKind::Pillar => "pillar",
            AssetKind::RoofTile => "roof_tile",
        }
    }
}

impl fmt::Display for AssetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub slot: String,
    /// Default HSV color.
    pub color: [f64; 3],
}

/// Template parameters an asset was built from. Lengths along the wall and
/// vertically are fractions of the unit cell; depths are meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetParams {
    pub thickness: f64,
    pub frame_width: f64,
    pub inset_depth: f64,
    pub mullions: u32,
    pub relief: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetDef {
    pub kind: AssetKind,
    pub params: AssetParams,
    pub materials: Vec<Material>,
    /// Geometry in the unit cell: `x, z` in `[0, 1]`, `y` depth in meters,
    /// front towards `-y`.
    pub mesh: Mesh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetCatalog {
    pub seed: u64,
    pub assets: Vec<AssetDef>,
}

pub const MIN_CATALOG_SIZE: usize = AssetKind::ALL.len();
pub const DEFAULT_CATALOG_SIZE: usize = 64;

/// Deterministically builds `size` assets, cycling through the template kinds
/// so every kind is equally represented.
pub fn build_catalog(seed: u64, size: usize) -> Result<AssetCatalog, PriorError> {
    if size < MIN_CATALOG_SIZE {
        return Err(PriorError::CatalogTooSmall { size, min: MIN_CATALOG_SIZE });
    }
    let assets = (0..size).map(|i| build_asset(seed, i)).collect();
    Ok(AssetCatalog { seed, assets })
}

impl AssetCatalog {
    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&AssetDef> {
        self.assets.get(i)
    }

    /// Asset indices of one template kind, ascending.
    pub fn of_kind(&self, kind: AssetKind) -> Vec<usize> {
        self.assets.iter().enumerate().filter(|(_, a)| a.kind == kind).map(|(i, _)| i).collect()
    }

    pub fn material_counts(&self) -> Vec<usize> {
        self.assets.iter().map(|a| a.materials.len()).collect()
    }

    /// SHA-256 over every parameter, color and vertex bit pattern.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update((self.assets.len() as u64).to_le_bytes());
        for a in &self.assets {
            h.update(a.kind.name().as_bytes());
            h.update(serde_json::to_vec(&a.params).expect("params serialize"));
            for m in &a.materials {
                h.update(m.slot.as_bytes());
                for c in m.color {
                    h.update(c.to_le_bytes());
                }
            }
            for v in &a.mesh.vertices {
                for k in 0..3 {
                    h.update(v[k].to_le_bytes());
                }
            }
            for (t, s) in a.mesh.triangles.iter().zip(&a.mesh.slots) {
                for i in t {
                    h.update(i.to_le_bytes());
                }
                h.update(s.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

fn jitter_color<R: Rng>(rng: &mut R, base: [f64; 3], spread: [f64; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for k in 0..3 {
        c[k] = (base[k] + rng.random_range(-spread[k]..=spread[k])).clamp(0.0, 1.0);
    }
    c
}

fn build_asset(catalog_seed: u64, index: usize) -> AssetDef {
    let mut rng = seed::rng(seed::mix(catalog_seed, index as u64), seed::stream::CATALOG);
    let kind = AssetKind::ALL[index % AssetKind::ALL.len()];
    let params = AssetParams {
        thickness: rng.random_range(0.15..0.3),
        frame_width: rng.random_range(0.08..0.2),
        inset_depth: rng.random_range(0.05..0.2),
        mullions: rng.random_range(0..=2),
        relief: rng.random_range(0.1..0.35),
    };
    let wall = Material { slot: "wall".into(), color: jitter_color(&mut rng, [0.08, 0.25, 0.75], [0.08, 0.2, 0.2]) };
    let mut materials = vec![wall];
    let mut mesh = Mesh::default();
    let t = params.thickness;
    let fw = params.frame_width;
    let inset = params.inset_depth;
    let b = |x0: f64, y0: f64, z0: f64, x1: f64, y1: f64, z1: f64| (P3::new(x0, y0, z0), P3::new(x1, y1, z1));
    let add = |mesh: &mut Mesh, (lo, hi): (P3, P3), slot: u16| mesh.add_box(lo, hi, slot);

    match kind {
        AssetKind::WallPanel => {
            add(&mut mesh, b(0.0, 0.0, 0.0, 1.0, t, 1.0), 0);
            // Optional plinth band.
            if params.mullions > 0 {
                materials.push(Material { slot: "band".into(), color: jitter_color(&mut rng, [0.1, 0.1, 0.5], [0.1, 0.1, 0.2]) });
                add(&mut mesh, b(0.0, -0.05, 0.0, 1.0, 0.0, fw), 1);
            }
        }
        AssetKind::WindowPanel | AssetKind::DoorPanel => {
            let door = kind == AssetKind::DoorPanel;
            let (x0, x1) = if door { (0.3, 0.7) } else { (rng.random_range(0.15..0.3), rng.random_range(0.7..0.85)) };
            let (z0, z1) = if door {
                (0.0, rng.random_range(0.7..0.85))
            } else {
                (rng.random_range(0.25..0.35), rng.random_range(0.75..0.85))
            };
            materials.push(Material { slot: "frame".into(), color: jitter_color(&mut rng, [0.0, 0.0, 0.9], [0.5, 0.1, 0.1]) });
            let pane = if door { "door" } else { "glass" };
            let pane_color = if door { [0.07, 0.5, 0.35] } else { [0.55, 0.3, 0.35] };
            materials.push(Material { slot: pane.into(), color: jitter_color(&mut rng, pane_color, [0.05, 0.2, 0.15]) });
            // Wall around the opening.
            add(&mut mesh, b(0.0, 0.0, 0.0, x0, t, 1.0), 0);
            add(&mut mesh, b(x1, 0.0, 0.0, 1.0, t, 1.0), 0);
            add(&mut mesh, b(x0, 0.0, z1, x1, t, 1.0), 0);
            add(&mut mesh, b(x0, 0.0, 0.0, x1, t, z0), 0);
            // Frame, flush with the wall front and reaching the pane.
            let fz = fw * 0.5;
            add(&mut mesh, b(x0, 0.0, z0, x0 + fz, inset + 0.02, z1), 1);
            add(&mut mesh, b(x1 - fz, 0.0, z0, x1, inset + 0.02, z1), 1);
            add(&mut mesh, b(x0 + fz, 0.0, z1 - fz, x1 - fz, inset + 0.02, z1), 1);
            if !door {
                add(&mut mesh, b(x0 + fz, -0.04, z0, x1 - fz, inset + 0.02, z0 + fz), 1);
            }
            for m in 0..params.mullions {
                let xm = x0 + (x1 - x0) * (m + 1) as f64 / (params.mullions + 1) as f64;
                add(&mut mesh, b(xm - 0.015, inset - 0.03, z0, xm + 0.015, inset, z1), 1);
            }
            // Recessed pane.
            let zb = if door { z0 } else { z0 + fz };
            add(&mut mesh, b(x0 + fz, inset, zb, x1 - fz, inset + 0.02, z1 - fz), 2);
        }
        AssetKind::Cornice => {
            materials.push(Material { slot: "trim".into(), color: jitter_color(&mut rng, [0.1, 0.15, 0.85], [0.1, 0.1, 0.1]) });
            let z0 = rng.random_range(0.75..0.9);
            add(&mut mesh, b(0.0, 0.0, 0.0, 1.0, t, 1.0), 0);
            add(&mut mesh, b(0.0, -params.relief, z0, 1.0, 0.0, 1.0), 1);
            add(&mut mesh, b(0.0, -params.relief * 0.5, z0 - fw, 1.0, 0.0, z0), 1);
        }
        AssetKind::Pillar => {
            materials.push(Material { slot: "stone".into(), color: jitter_color(&mut rng, [0.1, 0.1, 0.6], [0.1, 0.1, 0.2]) });
            let w = rng.random_range(0.15..0.3);
            add(&mut mesh, b(0.0, 0.0, 0.0, 1.0, t, 1.0), 0);
            add(&mut mesh, b(0.5 - w / 2.0, -params.relief, 0.0, 0.5 + w / 2.0, 0.0, 1.0), 1);
        }
        AssetKind::RoofTile => {
            materials.push(Material { slot: "tile".into(), color: jitter_color(&mut rng, [0.02, 0.6, 0.45], [0.03, 0.2, 0.15]) });
            let steps = 2 + params.mullions;
            add(&mut mesh, b(0.0, 0.0, 0.0, 1.0, t, 1.0), 0);
            for s in 0..steps {
                let z = 1.0 - (s + 1) as f64 * 0.08;
                add(&mut mesh, b(0.0, -params.relief * (s + 1) as f64 / steps as f64, z, 1.0, 0.0, z + 0.08), 1);
            }
        }
    }
    AssetDef { kind, params, materials, mesh }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = build_catalog(1, 6).unwrap();
        let b = build_catalog(1, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
        let c = build_catalog(2, 6).unwrap();
        assert_ne!(a.assets[0].mesh, c.assets[0].mesh);
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn too_small_is_an_error() {
        assert!(matches!(build_catalog(1, 5), Err(PriorError::CatalogTooSmall { size: 5, .. })));
    }

    #[test]
    fn mesh_integrity_sweep() {
        let cat = build_catalog(11, DEFAULT_CATALOG_SIZE).unwrap();
        for (i, a) in cat.assets.iter().enumerate() {
            assert!(a.mesh.triangle_count() > 0, "asset {i}");
            assert!(a.mesh.area() > 0.0, "asset {i}");
            assert!(!a.materials.is_empty());
            assert!(a.mesh.slots.iter().all(|&s| (s as usize) < a.materials.len()), "asset {i}");
            let bb = a.mesh.aabb();
            assert!(bb.min.x >= 0.0 && bb.max.x <= 1.0 && bb.min.z >= 0.0 && bb.max.z <= 1.0, "asset {i}");
            for m in &a.materials {
                assert!(m.color.iter().all(|c| (0.0..=1.0).contains(c)));
            }
        }
        for kind in AssetKind::ALL {
            assert!(cat.of_kind(kind).len() >= 10);
        }
    }

    #[test]
    fn every_asset_is_a_union_of_closed_boxes() {
        // Each box contributes 12 outward triangles, so the signed volume is
        // the sum of positive box volumes.
        let cat = build_catalog(3, 12).unwrap();
        for a in &cat.assets {
            assert_eq!(a.mesh.triangle_count() % 12, 0);
            let vol: f64 = (0..a.mesh.triangle_count())
                .map(|i| {
                    let t = a.mesh.triangle(i);
                    t.a.coords.dot(&t.b.coords.cross(&t.c.coords)) / 6.0
                })
                .sum();
            assert!(vol > 0.0);
        }
    }
}
