use std::collections::VecDeque;

use crate::geometry::{Mesh, Triangle, P3, V3};
use crate::prior::AssetCatalog;
use crate::schema::BuildingAbstraction;

use super::{building_mesh, PointCloud, RenderError};

/// Occupancy voxel edge used to find enclosed air, meters.
pub const INTERIOR_RESOLUTION: f64 = 0.25;

// The grid origin is shifted by an irrational-looking amount so that
// axis-aligned faces at round coordinates do not coincide with voxel faces.
const ORIGIN_SHIFT: f64 = 0.012_345_7;
const PADDING: usize = 2;
const EPS: f64 = 1e-9;

const AIR: u8 = 0;
const SOLID: u8 = 1;
const EXTERIOR: u8 = 2;

/// Voxels marked solid where a triangle touches them, and exterior where air
/// is reachable from outside the mesh bounds.
#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    origin: P3,
    res: f64,
    dims: [usize; 3],
    cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn build(mesh: &Mesh, res: f64) -> Self {
        let bb = mesh.aabb();
        let pad = PADDING as f64 * res;
        let origin = P3::new(bb.min.x - pad - ORIGIN_SHIFT, bb.min.y - pad - ORIGIN_SHIFT, bb.min.z - pad - ORIGIN_SHIFT);
        let dims = [0, 1, 2].map(|k| (((bb.max[k] + pad - origin[k]) / res).ceil() as usize).max(1) + 1);
        let mut g = OccupancyGrid { origin, res, dims, cells: vec![AIR; dims[0] * dims[1] * dims[2]] };
        for i in 0..mesh.triangle_count() {
            g.rasterize(&mesh.triangle(i));
        }
        g.flood_exterior();
        g
    }

    fn index(&self, v: [usize; 3]) -> usize {
        (v[2] * self.dims[1] + v[1]) * self.dims[0] + v[0]
    }

    /// Voxel containing `p`, or `None` outside the grid.
    pub fn voxel_of(&self, p: &P3) -> Option<[usize; 3]> {
        let mut v = [0usize; 3];
        for k in 0..3 {
            let f = ((p[k] - self.origin[k]) / self.res).floor();
            if !(f >= 0.0 && (f as usize) < self.dims[k]) {
                return None;
            }
            v[k] = f as usize;
        }
        Some(v)
    }

    fn rasterize(&mut self, t: &Triangle) {
        let bb = t.aabb();
        let lo = [0, 1, 2].map(|k| (((bb.min[k] - EPS - self.origin[k]) / self.res).floor().max(0.0)) as usize);
        let hi = [0, 1, 2].map(|k| ((((bb.max[k] + EPS - self.origin[k]) / self.res).floor()) as usize).min(self.dims[k] - 1));
        let half = V3::repeat(self.res * 0.5 + EPS);
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let idx = self.index([x, y, z]);
                    if self.cells[idx] == SOLID {
                        continue;
                    }
                    let c = P3::new(
                        self.origin.x + (x as f64 + 0.5) * self.res,
                        self.origin.y + (y as f64 + 0.5) * self.res,
                        self.origin.z + (z as f64 + 0.5) * self.res,
                    );
                    if triangle_box_overlap(&c, &half, t) {
                        self.cells[idx] = SOLID;
                    }
                }
            }
        }
    }

    fn flood_exterior(&mut self) {
        let mut queue = VecDeque::new();
        let start = [0, 0, 0];
        let i0 = self.index(start);
        debug_assert_eq!(self.cells[i0], AIR, "padding keeps the corner empty");
        self.cells[i0] = EXTERIOR;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for (axis, delta) in [(0, -1i64), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)] {
                let n = v[axis] as i64 + delta;
                if n < 0 || n >= self.dims[axis] as i64 {
                    continue;
                }
                let mut w = v;
                w[axis] = n as usize;
                let idx = self.index(w);
                if self.cells[idx] == AIR {
                    self.cells[idx] = EXTERIOR;
                    queue.push_back(w);
                }
            }
        }
    }

    pub fn is_solid(&self, v: [usize; 3]) -> bool {
        self.cells[self.index(v)] == SOLID
    }

    pub fn is_exterior(&self, v: [usize; 3]) -> bool {
        self.cells[self.index(v)] == EXTERIOR
    }

    /// Exterior air, or solid with exterior air among its 26 neighbors.
    /// Points outside the grid are outside the mesh bounds and visible.
    pub fn visible(&self, p: &P3) -> bool {
        let Some(v) = self.voxel_of(p) else {
            return true;
        };
        match self.cells[self.index(v)] {
            EXTERIOR => true,
            SOLID => {
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let w = [v[0] as i64 + dx, v[1] as i64 + dy, v[2] as i64 + dz];
                            if (0..3).any(|k| w[k] < 0 || w[k] >= self.dims[k] as i64) {
                                return true;
                            }
                            if self.cells[self.index(w.map(|c| c as usize))] == EXTERIOR {
                                return true;
                            }
                        }
                    }
                }
                false
            }
            _ => false,
        }
    }
}

/// Keep-flags for `points` against arbitrary geometry.
pub fn filter_interior_mesh(points: &PointCloud, mesh: &Mesh, resolution: f64) -> Vec<bool> {
    if mesh.triangle_count() == 0 {
        return vec![true; points.len()];
    }
    let grid = OccupancyGrid::build(mesh, resolution);
    points.positions.iter().map(|p| grid.visible(p)).collect()
}

/// Removes points enclosed by the building's placed geometry.
pub fn filter_interior(points: &PointCloud, b: &BuildingAbstraction, catalog: &AssetCatalog) -> Result<PointCloud, RenderError> {
    let geometry = building_mesh(b, catalog)?;
    Ok(points.select(&filter_interior_mesh(points, &geometry.mesh, INTERIOR_RESOLUTION)))
}

/// Separating-axis test of a triangle against an axis-aligned box given by
/// center and half extents.
pub(crate) fn triangle_box_overlap(center: &P3, half: &V3, t: &Triangle) -> bool {
    let v = [t.a - center, t.b - center, t.c - center];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    // Box face normals.
    for k in 0..3 {
        let lo = v[0][k].min(v[1][k]).min(v[2][k]);
        let hi = v[0][k].max(v[1][k]).max(v[2][k]);
        if lo > half[k] || hi < -half[k] {
            return false;
        }
    }
    // Triangle normal.
    let n = e[0].cross(&e[1]);
    let r = half.x * n.x.abs() + half.y * n.y.abs() + half.z * n.z.abs();
    if n.dot(&v[0]).abs() > r {
        return false;
    }
    // Edge cross products.
    for edge in &e {
        for k in 0..3 {
            let mut axis = V3::zeros();
            axis[k] = 1.0;
            let a = axis.cross(edge);
            if a.norm_squared() < 1e-24 {
                continue;
            }
            let p = [a.dot(&v[0]), a.dot(&v[1]), a.dot(&v[2])];
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            let r = half.x * a.x.abs() + half.y * a.y.abs() + half.z * a.z.abs();
            if lo > r || hi < -r {
                return false;
            }
        }
    }
    true
}
