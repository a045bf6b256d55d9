//! Point-cloud observation model: place asset meshes, sample their surfaces,
//! drop interior points, add Gaussian noise. Also voxelization, the
//! perturbations used for robustness studies, and binary PLY I/O.

mod interior;
mod perturb;
mod ply;
mod voxel;

pub use interior::{filter_interior, filter_interior_mesh, OccupancyGrid, INTERIOR_RESOLUTION};
pub use perturb::{dropout_voxels, perturb_drop_center, perturb_drop_random, perturb_split, PerturbError};
pub use ply::{read_ply, write_ply, PlyError};
pub use voxel::{voxelize, VoxelGrid, DEFAULT_MAX_POINTS, DEFAULT_VOXEL_EDGE};

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::geometry::{Aabb, Mesh, P3};
use crate::prior::AssetCatalog;
use crate::schema::{derive_cell_transforms, BuildingAbstraction, CellKey, TransformError};
use crate::seed;

/// Default surface sampling density, points per square meter.
pub const DEFAULT_DENSITY: f64 = 40.0;

/// Points with RGB colors in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<P3>,
    pub colors: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, p: P3, c: [f64; 3]) {
        self.positions.push(p);
        self.colors.push(c);
    }

    pub fn aabb(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for p in &self.positions {
            bb.grow(p);
        }
        bb
    }

    /// Points whose `keep` flag is set, in order.
    pub fn select(&self, keep: &[bool]) -> PointCloud {
        let mut out = PointCloud::default();
        for ((p, c), &k) in self.positions.iter().zip(&self.colors).zip(keep) {
            if k {
                out.push(*p, *c);
            }
        }
        out
    }

    pub fn subset(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: indices.iter().map(|&i| self.colors[i]).collect(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("cell {key:?} has a degenerate transform (scale {scale:?})")]
    DegenerateTransform { key: CellKey, scale: [f64; 2] },
    #[error("cell {key:?} uses asset {cell_type} outside the catalog of {catalog_size}")]
    UnknownAsset { key: CellKey, cell_type: usize, catalog_size: usize },
    #[error("density must be positive and finite, got {0}")]
    Density(f64),
}

/// World-space geometry of a building with one RGB color per triangle.
#[derive(Debug, Clone, Default)]
pub struct BuildingMesh {
    pub mesh: Mesh,
    pub colors: Vec<[f64; 3]>,
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 % 6 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

fn place(b: &BuildingAbstraction, catalog: &AssetCatalog, skip_degenerate: bool) -> Result<(BuildingMesh, usize), RenderError> {
    let transforms = derive_cell_transforms(b)?;
    let variations: HashMap<(usize, usize), [f64; 3]> =
        b.material_variations.iter().map(|v| ((v.cell_type, v.material_slot), v.color)).collect();
    let mut out = BuildingMesh::default();
    let mut skipped = 0;
    for (key, t) in &transforms {
        let facade = &b.facades[b.storeys[key.storey].facade_index];
        let cell = &facade.cells_patterns[key.pattern].cells[key.cell];
        if t.is_degenerate() {
            if skip_degenerate {
                skipped += 1;
                continue;
            }
            return Err(RenderError::DegenerateTransform { key: *key, scale: t.scale });
        }
        let asset = catalog.get(cell.cell_type).ok_or(RenderError::UnknownAsset {
            key: *key,
            cell_type: cell.cell_type,
            catalog_size: catalog.len(),
        })?;
        let palette: Vec<[f64; 3]> = asset
            .materials
            .iter()
            .enumerate()
            .map(|(slot, m)| hsv_to_rgb(*variations.get(&(cell.cell_type, slot)).unwrap_or(&m.color)))
            .collect();
        let base = out.mesh.vertices.len() as u32;
        out.mesh.vertices.extend(asset.mesh.vertices.iter().map(|v| t.apply(v)));
        out.mesh.triangles.extend(asset.mesh.triangles.iter().map(|tri| [tri[0] + base, tri[1] + base, tri[2] + base]));
        out.mesh.slots.extend_from_slice(&asset.mesh.slots);
        out.colors.extend(asset.mesh.slots.iter().map(|&s| palette[s as usize]));
    }
    Ok((out, skipped))
}

/// Places every cell's asset. Fails on cells with a zero or non-finite scale.
pub fn building_mesh(b: &BuildingAbstraction, catalog: &AssetCatalog) -> Result<BuildingMesh, RenderError> {
    place(b, catalog, false).map(|(m, _)| m)
}

/// Like [`building_mesh`] but skips degenerate cells, returning how many were
/// dropped. Used when scoring arbitrary decoded buildings.
pub fn building_mesh_lenient(b: &BuildingAbstraction, catalog: &AssetCatalog) -> Result<(BuildingMesh, usize), RenderError> {
    place(b, catalog, true)
}

/// Area-uniform surface samples. Each triangle receives `floor(area * density)`
/// points plus one more with probability equal to the fractional part.
pub fn sample_surface(geometry: &BuildingMesh, density: f64, seed: u64) -> Result<PointCloud, RenderError> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(RenderError::Density(density));
    }
    let mut rng = seed::rng(seed, seed::stream::SURFACE);
    let mut out = PointCloud::default();
    for i in 0..geometry.mesh.triangle_count() {
        let tri = geometry.mesh.triangle(i);
        let expected = tri.area() * density;
        let mut n = expected.floor() as usize;
        if rng.random::<f64>() < expected - n as f64 {
            n += 1;
        }
        for _ in 0..n {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let s = r1.sqrt();
            out.push(tri.at(s * (1.0 - r2), s * r2), geometry.colors[i]);
        }
    }
    Ok(out)
}

/// Isotropic Gaussian displacement with per-axis standard deviation `sigma`.
pub fn add_noise(pc: &PointCloud, sigma: f64, seed: u64) -> PointCloud {
    let mut out = pc.clone();
    if sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = seed::rng(seed, seed::stream::NOISE);
    for p in &mut out.positions {
        for k in 0..3 {
            p[k] += normal.sample(&mut rng);
        }
    }
    out
}

/// Every intermediate stage of one render.
#[derive(Debug, Clone)]
pub struct Rendered {
    pub surface: PointCloud,
    pub filtered: PointCloud,
    pub noisy: PointCloud,
}

/// Full observation model at the building's own `noise_level`.
pub fn render(b: &BuildingAbstraction, catalog: &AssetCatalog, density: f64, seed: u64) -> Result<PointCloud, RenderError> {
    render_stages(b, catalog, density, b.noise_level, seed).map(|r| r.noisy)
}

/// Render with an explicit noise level. Surface sampling and noise use
/// independent streams, so different `sigma` share the same surface points.
pub fn render_stages(
    b: &BuildingAbstraction,
    catalog: &AssetCatalog,
    density: f64,
    sigma: f64,
    seed: u64,
) -> Result<Rendered, RenderError> {
    let geometry = building_mesh(b, catalog)?;
    let surface = sample_surface(&geometry, density, seed)?;
    let keep = filter_interior_mesh(&surface, &geometry.mesh, INTERIOR_RESOLUTION);
    let filtered = surface.select(&keep);
    let noisy = add_noise(&filtered, sigma, seed);
    Ok(Rendered { surface, filtered, noisy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_catalog, sample, PriorConfig};
    use crate::schema::fixtures::box_building;

    #[test]
    fn hsv_primaries() {
        assert_eq!(hsv_to_rgb([0.0, 1.0, 1.0]), [1.0, 0.0, 0.0]);
        let g = hsv_to_rgb([1.0 / 3.0, 1.0, 1.0]);
        assert!((g[1] - 1.0).abs() < 1e-12 && g[0].abs() < 1e-12);
        assert_eq!(hsv_to_rgb([0.3, 0.0, 0.5]), [0.5, 0.5, 0.5]);
        assert_eq!(hsv_to_rgb([1.0, 1.0, 1.0]), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn zero_noise_points_lie_on_triangles() {
        let cat = build_catalog(0, 12).unwrap();
        let b = box_building(8.0, 6.0, 2);
        let g = building_mesh(&b, &cat).unwrap();
        let pc = sample_surface(&g, 20.0, 1).unwrap();
        assert!(pc.len() > 1000);
        for p in pc.positions.iter().step_by(37) {
            let d = (0..g.mesh.triangle_count()).map(|i| g.mesh.triangle(i).distance_sq(p)).fold(f64::INFINITY, f64::min);
            assert!(d.sqrt() < 1e-9);
        }
    }

    #[test]
    fn doubling_density_doubles_points() {
        let cat = build_catalog(0, 64).unwrap();
        let b = sample(3, &PriorConfig::default(), &cat);
        let g = building_mesh(&b, &cat).unwrap();
        let a = sample_surface(&g, 20.0, 5).unwrap().len() as f64;
        let c = sample_surface(&g, 40.0, 5).unwrap().len() as f64;
        assert!((c / a - 2.0).abs() < 0.2, "{a} vs {c}");
        let expected = g.mesh.area() * 40.0;
        assert!((c - expected).abs() / expected < 0.05);
    }

    #[test]
    fn degenerate_cell_is_reported() {
        let cat = build_catalog(0, 12).unwrap();
        let mut b = box_building(8.0, 6.0, 1);
        let cells = &mut b.facades[0].cells_patterns[0].cells;
        cells.push(cells[0].clone());
        let err = building_mesh(&b, &cat).unwrap_err();
        assert!(matches!(err, RenderError::DegenerateTransform { key: CellKey { storey: 0, pattern: 0, cell: 0 }, .. }));
        let (_, skipped) = building_mesh_lenient(&b, &cat).unwrap();
        assert_eq!(skipped, 1);
    }

    #[test]
    fn variations_recolor_only_their_slot() {
        let cat = build_catalog(0, 12).unwrap();
        let mut b = box_building(8.0, 6.0, 1);
        let plain = building_mesh(&b, &cat).unwrap();
        b.material_variations.push(crate::schema::MaterialVariation { cell_type: 0, material_slot: 0, color: [0.0, 1.0, 1.0] });
        let varied = building_mesh(&b, &cat).unwrap();
        for ((a, c), &slot) in plain.colors.iter().zip(&varied.colors).zip(&varied.mesh.slots) {
            if slot == 0 {
                assert_eq!(*c, [1.0, 0.0, 0.0]);
            } else {
                assert_eq!(a, c);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let cat = build_catalog(0, 64).unwrap();
        let b = sample(9, &PriorConfig::default(), &cat);
        assert_eq!(render(&b, &cat, 10.0, 4).unwrap(), render(&b, &cat, 10.0, 4).unwrap());
        assert_ne!(render(&b, &cat, 10.0, 4).unwrap(), render(&b, &cat, 10.0, 5).unwrap());
    }

    #[test]
    fn noise_shares_surface_points_across_sigma() {
        let cat = build_catalog(0, 64).unwrap();
        let b = sample(9, &PriorConfig::default(), &cat);
        let a = render_stages(&b, &cat, 10.0, 0.0, 4).unwrap();
        let c = render_stages(&b, &cat, 10.0, 0.3, 4).unwrap();
        assert_eq!(a.filtered, c.filtered);
        assert_eq!(a.noisy, a.filtered);
        assert_eq!(c.noisy.len(), c.filtered.len());
    }
}
