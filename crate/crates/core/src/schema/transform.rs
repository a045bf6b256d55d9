use std::collections::BTreeMap;

use nalgebra::{Point3, Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use super::validate::MIN_SEGMENT_LENGTH;
use super::{BuildingAbstraction, CellModifier, Footprint};

/// Identifies one placed cell: the storey it is instantiated on, and the
/// pattern and cell within that storey's facade.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub storey: usize,
    pub pattern: usize,
    pub cell: usize,
}

/// Placement of an asset's unit cell in world space.
///
/// Asset-local `x` runs along the wall and is scaled by `scale[0]`, local `z`
/// is up and scaled by `scale[1]`, local `y` is depth in meters with the
/// asset's front facing `-y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTransform {
    pub position: Point3<f64>,
    pub scale: [f64; 2],
    pub rotation: UnitQuaternion<f64>,
}

impl CellTransform {
    pub fn apply(&self, local: &Point3<f64>) -> Point3<f64> {
        let scaled = Vector3::new(local.x * self.scale[0], local.y, local.z * self.scale[1]);
        self.position + self.rotation * scaled
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.scale[0].is_finite() && self.scale[1].is_finite()) || self.scale[0] == 0.0 || self.scale[1] == 0.0
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("footprint {footprint} segment {segment} is degenerate")]
    DegenerateSegment { footprint: usize, segment: usize },
    #[error("dangling reference at {0}")]
    DanglingReference(String),
}

pub fn yaw_rotation(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

pub fn modifier_rotation(m: &CellModifier) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(m.quaternion_4, 0.0, 0.0, m.quaternion_3))
}

/// A polyline over consecutive footprint segments, parameterized by arc length.
pub(crate) struct Span {
    starts: Vec<[f64; 2]>,
    dirs: Vec<[f64; 2]>,
    lens: Vec<f64>,
    pub total: f64,
}

impl Span {
    pub fn new(fp: &Footprint, footprint: usize, first: usize, last: usize) -> Result<Self, TransformError> {
        let mut span = Span { starts: vec![], dirs: vec![], lens: vec![], total: 0.0 };
        for s in first..=last {
            let (a, b) = fp.segment(s);
            let len = fp.segment_length(s);
            if !(len >= MIN_SEGMENT_LENGTH) {
                return Err(TransformError::DegenerateSegment { footprint, segment: s });
            }
            span.starts.push(a);
            span.dirs.push([(b[0] - a[0]) / len, (b[1] - a[1]) / len]);
            span.lens.push(len);
            span.total += len;
        }
        Ok(span)
    }

    /// Point and unit direction at fraction `t` of the total length. Corners
    /// belong to the later segment; `t = 1` stays on the last one.
    pub fn locate(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let mut remaining = t * self.total;
        let last = self.lens.len() - 1;
        for k in 0..=last {
            if remaining < self.lens[k] || k == last {
                let (a, d) = (self.starts[k], self.dirs[k]);
                if k == last && self.lens.len() == 1 {
                    // Exact endpoint interpolation on a single segment.
                    let len = self.lens[k];
                    let b = [a[0] + d[0] * len, a[1] + d[1] * len];
                    return ([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t], d);
                }
                return ([a[0] + d[0] * remaining, a[1] + d[1] * remaining], d);
            }
            remaining -= self.lens[k];
        }
        unreachable!()
    }
}

/// Computes the world placement of every cell of every storey.
///
/// Position interpolates the pattern span at the cell offset, at the storey's
/// elevation. Yaw aligns local `+x` with the segment direction, which turns
/// the asset front towards the outside of a counter-clockwise footprint.
/// Horizontal scale is the span distance to the next cell (to the span end
/// for the last cell); vertical scale is the distance to the next storey (to
/// the roof for the top storey). A modifier replaces both scales and the
/// rotation.
pub fn derive_cell_transforms(b: &BuildingAbstraction) -> Result<BTreeMap<CellKey, CellTransform>, TransformError> {
    let mut out = BTreeMap::new();
    for (si, storey) in b.storeys.iter().enumerate() {
        let facade = b
            .facades
            .get(storey.facade_index)
            .ok_or_else(|| TransformError::DanglingReference(format!("storeys[{si}].facade_index")))?;
        let fp = b
            .footprints
            .get(facade.footprint_index)
            .ok_or_else(|| TransformError::DanglingReference(format!("facades[{}].footprint_index", storey.facade_index)))?;
        let top = b.storeys.get(si + 1).map_or(b.height, |next| next.elevation);
        let sy = top - storey.elevation;
        for (pi, pattern) in facade.cells_patterns.iter().enumerate() {
            let (first, last) = pattern.segment_range;
            if first > last || last >= fp.segment_count() {
                return Err(TransformError::DanglingReference(format!(
                    "facades[{}].cells_patterns[{pi}].segment_range",
                    storey.facade_index
                )));
            }
            let span = Span::new(fp, facade.footprint_index, first, last)?;
            for (ci, cell) in pattern.cells.iter().enumerate() {
                let next = pattern.cells.get(ci + 1).map_or(1.0, |n| n.offset);
                let (xy, dir) = span.locate(cell.offset);
                let mut t = CellTransform {
                    position: Point3::new(xy[0], xy[1], storey.elevation),
                    scale: [(next - cell.offset) * span.total, sy],
                    rotation: yaw_rotation(dir[1].atan2(dir[0])),
                };
                if let Some(m) = &cell.modifier {
                    t.scale = [m.scale_x, m.scale_y];
                    t.rotation = modifier_rotation(m);
                }
                out.insert(CellKey { storey: si, pattern: pi, cell: ci }, t);
            }
        }
    }
    Ok(out)
}
