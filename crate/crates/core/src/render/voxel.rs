use std::collections::BTreeMap;

use rand::seq::index;

use super::PointCloud;
use crate::seed;

pub const DEFAULT_VOXEL_EDGE: f64 = 7.0;
pub const DEFAULT_MAX_POINTS: usize = 300;

/// Cubic partition of a point cloud. Each voxel lists indices into the
/// source cloud, ascending, at most `max_points` of them.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub edge: f64,
    pub max_points: usize,
    pub voxels: BTreeMap<[i64; 3], Vec<usize>>,
}

impl VoxelGrid {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn point_count(&self) -> usize {
        self.voxels.values().map(Vec::len).sum()
    }

    pub fn key_of(edge: f64, p: &crate::geometry::P3) -> [i64; 3] {
        [0, 1, 2].map(|k| (p[k] / edge).floor() as i64)
    }

    /// Lower corner of a voxel.
    pub fn corner(&self, key: [i64; 3]) -> [f64; 3] {
        key.map(|k| k as f64 * self.edge)
    }

    /// The retained points as one cloud, in voxel then index order.
    pub fn gather(&self, pc: &PointCloud) -> PointCloud {
        let idx: Vec<usize> = self.voxels.values().flatten().copied().collect();
        pc.subset(&idx)
    }
}

/// Partitions by `floor(coordinate / edge)` and keeps a seeded uniform
/// subsample of at most `max_points` per voxel.
pub fn voxelize(pc: &PointCloud, edge: f64, max_points: usize, seed: u64) -> VoxelGrid {
    assert!(edge > 0.0, "voxel edge must be positive");
    let mut voxels: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in pc.positions.iter().enumerate() {
        voxels.entry(VoxelGrid::key_of(edge, p)).or_default().push(i);
    }
    let mut rng = seed::rng(seed, seed::stream::VOXEL);
    for members in voxels.values_mut() {
        if members.len() > max_points {
            let mut chosen: Vec<usize> =
                index::sample(&mut rng, members.len(), max_points).into_iter().map(|j| members[j]).collect();
            chosen.sort_unstable();
            *members = chosen;
        }
    }
    VoxelGrid { edge, max_points, voxels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::P3;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        let mut pc = PointCloud::default();
        for p in points {
            pc.push(P3::new(p[0], p[1], p[2]), [0.0; 3]);
        }
        pc
    }

    #[test]
    fn one_cube() {
        let pc = cloud(&[[0.1, 0.2, 0.3], [6.9, 6.9, 6.9], [3.0, 1.0, 5.0]]);
        let g = voxelize(&pc, 7.0, 300, 0);
        assert_eq!(g.len(), 1);
        assert_eq!(g.voxels[&[0, 0, 0]], vec![0, 1, 2]);
    }

    #[test]
    fn cap_is_exact() {
        let pts: Vec<[f64; 3]> = (0..1000).map(|i| [i as f64 * 0.005, 1.0, 1.0]).collect();
        let g = voxelize(&cloud(&pts), 7.0, 300, 3);
        assert_eq!(g.point_count(), 300);
        let v = &g.voxels[&[0, 0, 0]];
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g, voxelize(&cloud(&pts), 7.0, 300, 3));
        assert_ne!(g, voxelize(&cloud(&pts), 7.0, 300, 4));
    }

    #[test]
    fn boundary_goes_to_higher_voxel() {
        let g = voxelize(&cloud(&[[7.0, 0.0, -7.0], [-0.0001, 0.0, 0.0]]), 7.0, 300, 0);
        assert_eq!(g.voxels[&[1, 0, -1]], vec![0]);
        assert_eq!(g.voxels[&[-1, 0, 0]], vec![1]);
    }

    #[test]
    fn partition_property() {
        let pts: Vec<[f64; 3]> = (0..5000)
            .map(|i| {
                let f = i as f64;
                [(f * 0.731).sin() * 30.0, (f * 1.37).cos() * 20.0, (f * 0.11) % 25.0]
            })
            .collect();
        let pc = cloud(&pts);
        let g = voxelize(&pc, 7.0, 40, 1);
        let mut seen = vec![false; pc.len()];
        for (key, members) in &g.voxels {
            assert!(members.len() <= 40);
            for &i in members {
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(VoxelGrid::key_of(7.0, &pc.positions[i]), *key);
            }
        }
    }
}
