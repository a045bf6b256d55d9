use rand::Rng;
use thiserror::Error;

use super::{PointCloud, VoxelGrid};
use crate::geometry::{P3, V3};
use crate::seed;

#[derive(Debug, Error, PartialEq)]
pub enum PerturbError {
    #[error("split gap must be nonnegative, got {0}")]
    NegativeGap(f64),
    #[error("block edge must be positive, got {0}")]
    BlockEdge(f64),
    #[error("rate must lie in [0, 1], got {0}")]
    Rate(f64),
}

fn inside(p: &P3, center: &P3, half: f64) -> bool {
    (0..3).all(|k| (p[k] - center[k]).abs() <= half)
}

fn drop_blocks(pc: &PointCloud, centers: &[P3], edge: f64) -> PointCloud {
    let half = edge / 2.0;
    let keep: Vec<bool> = pc.positions.iter().map(|p| !centers.iter().any(|c| inside(p, c, half))).collect();
    pc.select(&keep)
}

/// Removes every point within `n_blocks` cubes whose centers are uniform in
/// the bounding box.
pub fn perturb_drop_random(pc: &PointCloud, block_edge: f64, n_blocks: usize, seed: u64) -> Result<PointCloud, PerturbError> {
    if !(block_edge > 0.0) {
        return Err(PerturbError::BlockEdge(block_edge));
    }
    if pc.is_empty() {
        return Ok(pc.clone());
    }
    let bb = pc.aabb();
    let mut rng = seed::rng(seed, seed::stream::PERTURB);
    let centers: Vec<P3> = (0..n_blocks)
        .map(|_| {
            let mut c = P3::origin();
            for k in 0..3 {
                c[k] = if bb.max[k] > bb.min[k] { rng.random_range(bb.min[k]..=bb.max[k]) } else { bb.min[k] };
            }
            c
        })
        .collect();
    Ok(drop_blocks(pc, &centers, block_edge))
}

/// Removes the points of one cube centered on the bounding-box center.
pub fn perturb_drop_center(pc: &PointCloud, block_edge: f64) -> Result<PointCloud, PerturbError> {
    if !(block_edge > 0.0) {
        return Err(PerturbError::BlockEdge(block_edge));
    }
    if pc.is_empty() {
        return Ok(pc.clone());
    }
    Ok(drop_blocks(pc, &[pc.aabb().center()], block_edge))
}

/// Moves points left of the median x by `-gap / 2` and the rest by `+gap / 2`.
pub fn perturb_split(pc: &PointCloud, gap: f64) -> Result<PointCloud, PerturbError> {
    if !(gap >= 0.0) {
        return Err(PerturbError::NegativeGap(gap));
    }
    let mut out = pc.clone();
    if gap == 0.0 || pc.is_empty() {
        return Ok(out);
    }
    let mut xs: Vec<f64> = pc.positions.iter().map(|p| p.x).collect();
    xs.sort_by(f64::total_cmp);
    let median = xs[xs.len() / 2];
    let shift = V3::new(gap / 2.0, 0.0, 0.0);
    for p in &mut out.positions {
        if p.x < median {
            *p -= shift;
        } else {
            *p += shift;
        }
    }
    Ok(out)
}

/// Drops each voxel independently with probability `rate`.
pub fn dropout_voxels(g: &VoxelGrid, rate: f64, seed: u64) -> Result<VoxelGrid, PerturbError> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(PerturbError::Rate(rate));
    }
    let mut rng = seed::rng(seed, seed::stream::DROPOUT);
    let mut out = g.clone();
    out.voxels.retain(|_, _| !rng.random_bool(rate));
    Ok(out)
}
