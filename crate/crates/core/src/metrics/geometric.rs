use rayon::prelude::*;

use crate::geometry::{Aabb, Mesh, Triangle, P3};

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding-volume hierarchy over the triangles of a mesh for exact
/// nearest-triangle queries.
#[derive(Debug, Clone)]
pub struct Bvh {
    triangles: Vec<Triangle>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Bvh {
    pub fn build(mesh: &Mesh) -> Self {
        let triangles: Vec<Triangle> = (0..mesh.triangle_count()).map(|i| mesh.triangle(i)).collect();
        let mut order: Vec<usize> = (0..triangles.len()).collect();
        let mut nodes = Vec::new();
        if !triangles.is_empty() {
            let centroids: Vec<P3> = triangles.iter().map(Triangle::centroid).collect();
            let boxes: Vec<Aabb> = triangles.iter().map(Triangle::aabb).collect();
            build_node(&mut nodes, &mut order, 0, triangles.len(), &centroids, &boxes);
        }
        Bvh { triangles, order, nodes }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Squared distance to the nearest triangle and that triangle's index.
    /// Subtrees are skipped only when their box is strictly farther than the
    /// best distance so far, so the minimum equals the brute-force minimum.
    pub fn nearest(&self, p: &P3) -> Option<(f64, usize)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            if self.nodes[n].bounds().distance_sq(p) > best.0 {
                continue;
            }
            match &self.nodes[n] {
                Node::Leaf { start, end, .. } => {
                    for &t in &self.order[*start..*end] {
                        let d = self.triangles[t].distance_sq(p);
                        if d < best.0 || (d == best.0 && t < best.1) {
                            best = (d, t);
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_sq(p);
                    let dr = self.nodes[*right].bounds().distance_sq(p);
                    // Visit the nearer child first.
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        Some(best)
    }
}

fn build_node(nodes: &mut Vec<Node>, order: &mut [usize], start: usize, end: usize, centroids: &[P3], boxes: &[Aabb]) -> usize {
    let mut bounds = Aabb::empty();
    let mut cbounds = Aabb::empty();
    for &t in &order[start..end] {
        bounds = bounds.union(&boxes[t]);
        cbounds.grow(&centroids[t]);
    }
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start, end });
        return id;
    }
    let ext = cbounds.extent();
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    let mid = (start + end) / 2;
    order[start..end]
        .select_nth_unstable_by(mid - start, |&a, &b| centroids[a][axis].total_cmp(&centroids[b][axis]).then(a.cmp(&b)));
    nodes.push(Node::Leaf { bounds, start, end });
    let left = build_node(nodes, order, start, mid, centroids, boxes);
    let right = build_node(nodes, order, mid, end, centroids, boxes);
    nodes[id] = Node::Inner { bounds, left, right };
    id
}

/// Minimum distance over all triangles, by exhaustive scan.
pub fn nearest_brute_force(mesh: &Mesh, p: &P3) -> f64 {
    (0..mesh.triangle_count()).map(|i| mesh.triangle(i).distance_sq(p)).fold(f64::INFINITY, f64::min).sqrt()
}

/// Mean point-to-mesh distance. Per-point distances are computed in
/// parallel and summed in point order.
pub fn mean_distance(bvh: &Bvh, points: &[P3]) -> f64 {
    let d: Vec<f64> = points.par_iter().map(|p| bvh.nearest(p).map_or(f64::INFINITY, |(d2, _)| d2.sqrt())).collect();
    d.iter().sum::<f64>() / d.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_brute_force_on_random_soup() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut mesh = Mesh::default();
        for _ in 0..300 {
            let c = P3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), rng.random_range(0.0..30.0));
            let s = rng.random_range(0.1..3.0);
            mesh.add_box(c, c + nalgebra::Vector3::new(s, s * 0.5, s * 2.0), 0);
        }
        let bvh = Bvh::build(&mesh);
        for _ in 0..500 {
            let p = P3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-10.0..40.0));
            let (d2, _) = bvh.nearest(&p).unwrap();
            assert_eq!(d2.sqrt(), nearest_brute_force(&mesh, &p));
        }
    }

    #[test]
    fn empty_mesh_has_no_nearest() {
        assert!(Bvh::build(&Mesh::default()).nearest(&P3::origin()).is_none());
    }
}
