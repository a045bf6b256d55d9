//! The building abstraction language.
//!
//! A [`BuildingAbstraction`] is an extruded-footprint building described
//! hierarchically: footprint polygons, facades laid out along footprint
//! segments as patterns of asset cells, storeys that link to facades, and
//! per-asset material color variations. Cell scales and rotations are not
//! stored; they are derived from the layout (see [`derive_cell_transforms`])
//! unless a [`CellModifier`] overrides them.

mod canonical;
mod transform;
mod validate;

pub use canonical::canonicalize;
pub use transform::{derive_cell_transforms, CellKey, CellTransform, TransformError};
pub use validate::{validate, validate_with_catalog, Violation};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingAbstraction {
    /// Total building height in meters.
    pub height: f64,
    pub footprints: Vec<Footprint>,
    pub facades: Vec<Facade>,
    pub storeys: Vec<Storey>,
    pub material_variations: Vec<MaterialVariation>,
    /// Standard deviation (meters) of the Gaussian point noise of the observation.
    pub noise_level: f64,
}

/// Planar polygon; segment `i` runs from vertex `i` to vertex `i + 1` (wrapping).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub vertices: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Storey {
    pub elevation: f64,
    pub facade_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facade {
    pub footprint_index: usize,
    pub cells_patterns: Vec<CellsPattern>,
}

/// A run of cells laid out along the footprint segments
/// `segment_range.0..=segment_range.1`, treated as one polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellsPattern {
    pub segment_range: (usize, usize),
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Index into the asset catalog.
    pub cell_type: usize,
    /// Arc-length fraction in `[0, 1]` along the pattern's segment span.
    pub offset: f64,
    pub modifier: Option<CellModifier>,
}

/// Explicit scale and yaw for a cell, replacing the derived values.
///
/// The rotation is the quaternion `(x, y, z, w) = (0, 0, quaternion_3, quaternion_4)`
/// after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellModifier {
    pub scale_x: f64,
    pub scale_y: f64,
    pub quaternion_3: f64,
    pub quaternion_4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialVariation {
    pub cell_type: usize,
    pub material_slot: usize,
    /// HSV, each component in `[0, 1]`.
    pub color: [f64; 3],
}

impl Footprint {
    pub fn segment_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn segment(&self, i: usize) -> ([f64; 2], [f64; 2]) {
        let n = self.vertices.len();
        (self.vertices[i % n], self.vertices[(i + 1) % n])
    }

    pub fn segment_length(&self, i: usize) -> f64 {
        let (a, b) = self.segment(i);
        (b[0] - a[0]).hypot(b[1] - a[1])
    }

    /// Shoelace area; positive for counter-clockwise vertex order.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        acc * 0.5
    }

    /// No two segments intersect except adjacent ones at their shared vertex.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        for i in 0..n {
            let (a, b) = self.segment(i);
            for j in (i + 1)..n {
                let (c, d) = self.segment(j);
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    // Adjacent segments may only share their common vertex; a
                    // collinear fold-back overlaps.
                    if n == 3 {
                        continue;
                    }
                    let (shared, p, q) = if j == i + 1 { (b, a, d) } else { (a, b, c) };
                    if orient(p, shared, q) == 0.0 && dot_sub(p, shared, q) > 0.0 {
                        return false;
                    }
                    continue;
                }
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }
}

impl CellModifier {
    pub fn quaternion_norm(&self) -> f64 {
        self.quaternion_3.hypot(self.quaternion_4)
    }
}

impl BuildingAbstraction {
    /// Distinct asset indices used by any cell.
    pub fn asset_types(&self) -> std::collections::BTreeSet<usize> {
        self.facades.iter().flat_map(|f| f.cells_patterns.iter()).flat_map(|p| p.cells.iter()).map(|c| c.cell_type).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.facades.iter().flat_map(|f| f.cells_patterns.iter()).map(|p| p.cells.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("building serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

// (p - s) . (q - s)
fn dot_sub(p: [f64; 2], s: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - s[0]) * (q[0] - s[0]) + (p[1] - s[1]) * (q[1] - s[1])
}

fn on_segment(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// One footprint, one facade covering every segment with a single cell,
    /// `storeys` storeys of 3 m each, all linking facade 0.
    pub fn box_building(width: f64, depth: f64, storeys: usize) -> BuildingAbstraction {
        let vertices = vec![[0.0, 0.0], [width, 0.0], [width, depth], [0.0, depth]];
        let cells_patterns = (0..4)
            .map(|i| CellsPattern { segment_range: (i, i), cells: vec![Cell { cell_type: 0, offset: 0.0, modifier: None }] })
            .collect();
        BuildingAbstraction {
            height: 3.0 * storeys as f64,
            footprints: vec![Footprint { vertices }],
            facades: vec![Facade { footprint_index: 0, cells_patterns }],
            storeys: (0..storeys).map(|i| Storey { elevation: 3.0 * i as f64, facade_index: 0 }).collect(),
            material_variations: vec![],
            noise_level: 0.0,
        }
    }

    pub fn triangle_building() -> BuildingAbstraction {
        BuildingAbstraction {
            height: 3.0,
            footprints: vec![Footprint { vertices: vec![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]] }],
            facades: vec![Facade {
                footprint_index: 0,
                cells_patterns: vec![CellsPattern {
                    segment_range: (0, 0),
                    cells: vec![Cell { cell_type: 0, offset: 0.0, modifier: None }],
                }],
            }],
            storeys: vec![Storey { elevation: 0.0, facade_index: 0 }],
            material_variations: vec![],
            noise_level: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_area_orientation() {
        let ccw = Footprint { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] };
        assert_eq!(ccw.signed_area(), 1.0);
        let mut cw = ccw.clone();
        cw.vertices.reverse();
        assert_eq!(cw.signed_area(), -1.0);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let f = Footprint { vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]] };
        assert!(!f.is_simple());
        let sq = Footprint { vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]] };
        assert!(sq.is_simple());
    }

    #[test]
    fn fold_back_is_not_simple() {
        let f = Footprint { vertices: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]] };
        assert!(!f.is_simple());
    }

    #[test]
    fn json_uses_schema_field_names() {
        let b = fixtures::triangle_building();
        let text = b.to_json();
        for key in [
            "height",
            "footprints",
            "facades",
            "storeys",
            "material_variations",
            "noise_level",
            "segment_range",
            "cell_type",
            "facade_index",
            "footprint_index",
        ] {
            assert!(text.contains(&format!("\"{key}\"")), "{key} missing");
        }
        assert_eq!(BuildingAbstraction::from_json(&text).unwrap(), b);
    }
}
