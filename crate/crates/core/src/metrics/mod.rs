//! Structural and geometric comparison of inferred buildings with ground
//! truth, and corpus-level aggregation.

mod corpus;
mod geometric;
mod structural;

pub use corpus::{evaluate_corpus, CorpusReport, CurvePoint, EvalPair};
pub use geometric::{mean_distance, nearest_brute_force, Bvh};
pub use structural::{facade_fingerprint, structural, MetricsReport};

use thiserror::Error;

use crate::prior::AssetCatalog;
use crate::render::{building_mesh_lenient, PointCloud, RenderError};
use crate::schema::BuildingAbstraction;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("building places no triangles")]
    EmptyGeometry,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error(transparent)]
    Render(#[from] RenderError),
}

/// Mean distance from each point to the nearest triangle of the building's
/// placed geometry. Degenerate cells contribute no geometry.
pub fn geometric_error(pc: &PointCloud, b: &BuildingAbstraction, catalog: &AssetCatalog) -> Result<f64, MetricsError> {
    if pc.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let (geometry, _) = building_mesh_lenient(b, catalog)?;
    if geometry.mesh.triangle_count() == 0 {
        return Err(MetricsError::EmptyGeometry);
    }
    Ok(mean_distance(&Bvh::build(&geometry.mesh), &pc.positions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::P3;
    use crate::prior::{build_catalog, AssetKind};
    use crate::render::{building_mesh, render_stages};
    use crate::schema::fixtures::box_building;

    #[test]
    fn point_above_a_roof_face() {
        // A single crown cell whose top face is a large horizontal plane.
        let cat = build_catalog(0, 12).unwrap();
        let mut b = box_building(40.0, 40.0, 1);
        for p in &mut b.facades[0].cells_patterns {
            p.cells[0].cell_type = cat.of_kind(AssetKind::WallPanel)[0];
        }
        let g = building_mesh(&b, &cat).unwrap();
        let top = g.mesh.aabb().max.z;
        let mut pc = PointCloud::default();
        pc.push(P3::new(20.0, 0.1, top + 1.75), [0.0; 3]);
        let e = geometric_error(&pc, &b, &cat).unwrap();
        assert!((e - 1.75).abs() < 1e-12, "{e}");
    }

    #[test]
    fn on_surface_points_have_no_error() {
        let cat = build_catalog(0, 12).unwrap();
        let b = box_building(12.0, 9.0, 3);
        let r = render_stages(&b, &cat, 5.0, 0.0, 1).unwrap();
        assert!(geometric_error(&r.noisy, &b, &cat).unwrap() < 1e-9);
    }

    #[test]
    fn translation_invariance() {
        let cat = build_catalog(0, 12).unwrap();
        let b = box_building(12.0, 9.0, 2);
        let r = render_stages(&b, &cat, 3.0, 0.2, 1).unwrap();
        let e0 = geometric_error(&r.noisy, &b, &cat).unwrap();
        let (dx, dy) = (7.5, -3.25);
        let mut moved = b.clone();
        for v in &mut moved.footprints[0].vertices {
            v[0] += dx;
            v[1] += dy;
        }
        let mut pc = r.noisy.clone();
        for p in &mut pc.positions {
            p.x += dx;
            p.y += dy;
        }
        let e1 = geometric_error(&pc, &moved, &cat).unwrap();
        assert!((e0 - e1).abs() < 1e-9, "{e0} vs {e1}");
    }

    #[test]
    fn errors() {
        let cat = build_catalog(0, 12).unwrap();
        let b = box_building(12.0, 9.0, 2);
        assert_eq!(geometric_error(&PointCloud::default(), &b, &cat), Err(MetricsError::EmptyCloud));
    }
}
