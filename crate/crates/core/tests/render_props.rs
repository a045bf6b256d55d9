use std::time::Instant;

use procinv_core::geometry::{Mesh, P3};
use procinv_core::prior::{build_catalog, sample, PriorConfig};
use procinv_core::render::{
    building_mesh, filter_interior_mesh, render_stages, sample_surface, BuildingMesh, INTERIOR_RESOLUTION,
};

fn colored(mesh: Mesh) -> BuildingMesh {
    let colors = vec![[0.5; 3]; mesh.triangle_count()];
    BuildingMesh { mesh, colors }
}

/// Axis-aligned cube surface; normals point outward, or inward when `flip`.
fn cube_shell(m: &mut Mesh, lo: f64, hi: f64, flip: bool) {
    let mut b = Mesh::default();
    b.add_box(P3::new(lo, lo, lo), P3::new(hi, hi, hi), 0);
    if flip {
        for t in &mut b.triangles {
            t.swap(1, 2);
        }
    }
    m.append(&b);
}

#[test]
fn closed_box_keeps_exterior_faces() {
    // A closed 8 m building with 1 m thick walls: outer and inner surfaces.
    let mut m = Mesh::default();
    cube_shell(&mut m, 0.0, 8.0, false);
    cube_shell(&mut m, 1.0, 7.0, true);
    let g = colored(m);
    let pc = sample_surface(&g, 60.0, 3).unwrap();
    let keep = filter_interior_mesh(&pc, &g.mesh, INTERIOR_RESOLUTION);
    let kept = keep.iter().filter(|&&k| k).count() as f64 / pc.len() as f64;
    let fraction = 6.0 * 64.0 / (6.0 * 64.0 + 6.0 * 36.0);
    println!("kept {kept:.4}, exterior area fraction {fraction:.4}");
    assert!((kept - fraction).abs() / fraction < 0.05);
}

#[test]
fn free_standing_panel_is_kept() {
    let mut m = Mesh::default();
    m.add_box(P3::new(0.0, 0.0, 0.0), P3::new(3.0, 0.2, 3.0), 0);
    let g = colored(m);
    let pc = sample_surface(&g, 200.0, 1).unwrap();
    assert!(filter_interior_mesh(&pc, &g.mesh, INTERIOR_RESOLUTION).iter().all(|&k| k));
}

#[test]
fn prior_buildings_render_quickly() {
    let cat = build_catalog(0, 64).unwrap();
    let cfg = PriorConfig::default();
    let start = Instant::now();
    let mut points = 0;
    let mut kept = 0;
    for s in 0..20 {
        let b = sample(s, &cfg, &cat);
        let r = render_stages(&b, &cat, 40.0, 0.1, s).unwrap();
        points += r.surface.len();
        kept += r.filtered.len();
        assert!(!r.filtered.is_empty());
        assert!(building_mesh(&b, &cat).unwrap().mesh.triangle_count() > 0);
    }
    println!(
        "20 renders in {:.2?}: {points} surface points, {:.3} kept by the interior filter",
        start.elapsed(),
        kept as f64 / points as f64
    );
}
