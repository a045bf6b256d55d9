//! Triangle meshes and the small amount of computational geometry shared by
//! the catalog, renderer and metrics.

use std::fmt::Write as _;

use nalgebra::{Point3, Vector3};

pub type P3 = Point3<f64>;
pub type V3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: P3,
    pub b: P3,
    pub c: P3,
}

impl Triangle {
    pub fn new(a: P3, b: P3, c: P3) -> Self {
        Triangle { a, b, c }
    }

    /// Unnormalized normal following the right-hand rule on `a, b, c`.
    pub fn cross(&self) -> V3 {
        (self.b - self.a).cross(&(self.c - self.a))
    }

    pub fn area(&self) -> f64 {
        0.5 * self.cross().norm()
    }

    pub fn centroid(&self) -> P3 {
        P3::from((self.a.coords + self.b.coords + self.c.coords) / 3.0)
    }

    pub fn aabb(&self) -> Aabb {
        let mut bb = Aabb::empty();
        bb.grow(&self.a);
        bb.grow(&self.b);
        bb.grow(&self.c);
        bb
    }

    /// Point at barycentric coordinates `(1 - u - v, u, v)`.
    pub fn at(&self, u: f64, v: f64) -> P3 {
        self.a + (self.b - self.a) * u + (self.c - self.a) * v
    }

    /// Closest point on the (closed) triangle, by Voronoi region tests.
    pub fn closest_point(&self, p: &P3) -> P3 {
        let (a, b, c) = (self.a, self.b, self.c);
        let ab = b - a;
        let ac = c - a;
        let ap = p - a;
        let d1 = ab.dot(&ap);
        let d2 = ac.dot(&ap);
        if d1 <= 0.0 && d2 <= 0.0 {
            return a;
        }
        let bp = p - b;
        let d3 = ab.dot(&bp);
        let d4 = ac.dot(&bp);
        if d3 >= 0.0 && d4 <= d3 {
            return b;
        }
        let vc = d1 * d4 - d3 * d2;
        if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
            let v = d1 / (d1 - d3);
            return a + ab * v;
        }
        let cp = p - c;
        let d5 = ab.dot(&cp);
        let d6 = ac.dot(&cp);
        if d6 >= 0.0 && d5 <= d6 {
            return c;
        }
        let vb = d5 * d2 - d1 * d6;
        if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
            let w = d2 / (d2 - d6);
            return a + ac * w;
        }
        let va = d3 * d6 - d5 * d4;
        if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
            let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
            return b + (c - b) * w;
        }
        let denom = 1.0 / (va + vb + vc);
        let v = vb * denom;
        let w = vc * denom;
        a + ab * v + ac * w
    }

    pub fn distance_sq(&self, p: &P3) -> f64 {
        (self.closest_point(p) - p).norm_squared()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: P3,
    pub max: P3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: P3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: P3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn grow(&mut self, p: &P3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb { min: self.min.inf(&o.min), max: self.max.sup(&o.max) }
    }

    pub fn extent(&self) -> V3 {
        self.max - self.min
    }

    pub fn center(&self) -> P3 {
        nalgebra::center(&self.min, &self.max)
    }

    /// Squared distance from `p` to the box; zero inside.
    pub fn distance_sq(&self, p: &P3) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

/// Indexed triangle mesh with a material slot per triangle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<P3>,
    pub triangles: Vec<[u32; 3]>,
    pub slots: Vec<u16>,
}

impl Mesh {
    pub fn triangle(&self, i: usize) -> Triangle {
        let [a, b, c] = self.triangles[i];
        Triangle::new(self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize])
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle(i).area()).sum()
    }

    pub fn aabb(&self) -> Aabb {
        let mut bb = Aabb::empty();
        for v in &self.vertices {
            bb.grow(v);
        }
        bb
    }

    /// Planar quad `a b c d` (counter-clockwise seen from the front side).
    pub fn add_quad(&mut self, q: [P3; 4], slot: u16) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&q);
        self.triangles.push([base, base + 1, base + 2]);
        self.triangles.push([base, base + 2, base + 3]);
        self.slots.extend([slot, slot]);
    }

    /// Closed axis-aligned box with outward-facing triangles. Degenerate
    /// extents are skipped.
    pub fn add_box(&mut self, min: P3, max: P3, slot: u16) {
        if !(max.x > min.x && max.y > min.y && max.z > min.z) {
            return;
        }
        let p = |x: bool, y: bool, z: bool| {
            P3::new(if x { max.x } else { min.x }, if y { max.y } else { min.y }, if z { max.z } else { min.z })
        };
        let (f, t) = (false, true);
        // -x, +x, -y, +y, -z, +z
        self.add_quad([p(f, f, f), p(f, f, t), p(f, t, t), p(f, t, f)], slot);
        self.add_quad([p(t, f, f), p(t, t, f), p(t, t, t), p(t, f, t)], slot);
        self.add_quad([p(f, f, f), p(t, f, f), p(t, f, t), p(f, f, t)], slot);
        self.add_quad([p(f, t, f), p(f, t, t), p(t, t, t), p(t, t, f)], slot);
        self.add_quad([p(f, f, f), p(f, t, f), p(t, t, f), p(t, f, f)], slot);
        self.add_quad([p(f, f, t), p(t, f, t), p(t, t, t), p(f, t, t)], slot);
    }

    pub fn append(&mut self, other: &Mesh) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.triangles.extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
        self.slots.extend_from_slice(&other.slots);
    }

    /// Wavefront OBJ text; one group per material slot name when given.
    pub fn to_obj(&self, name: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "o {name}");
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
        }
        let mut current = None;
        for (t, &slot) in self.triangles.iter().zip(&self.slots) {
            if current != Some(slot) {
                let _ = writeln!(s, "g slot{slot}");
                current = Some(slot);
            }
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri() -> Triangle {
        Triangle::new(P3::new(0.0, 0.0, 0.0), P3::new(2.0, 0.0, 0.0), P3::new(0.0, 2.0, 0.0))
    }

    #[test]
    fn closest_point_regions() {
        let t = tri();
        assert_eq!(t.closest_point(&P3::new(0.5, 0.5, 3.0)), P3::new(0.5, 0.5, 0.0));
        assert_eq!(t.closest_point(&P3::new(-1.0, -1.0, 0.0)), t.a);
        assert_eq!(t.closest_point(&P3::new(5.0, -1.0, 0.0)), t.b);
        assert_eq!(t.closest_point(&P3::new(1.0, -3.0, 1.0)), P3::new(1.0, 0.0, 0.0));
        let on_hyp = t.closest_point(&P3::new(2.0, 2.0, 0.0));
        assert!((on_hyp - P3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn box_is_closed_and_outward() {
        let mut m = Mesh::default();
        m.add_box(P3::new(0.0, 0.0, 0.0), P3::new(1.0, 2.0, 3.0), 0);
        assert_eq!(m.triangle_count(), 12);
        assert!((m.area() - 2.0 * (2.0 + 3.0 + 6.0)).abs() < 1e-12);
        let center = P3::new(0.5, 1.0, 1.5);
        for i in 0..12 {
            let t = m.triangle(i);
            assert!(t.cross().dot(&(t.centroid() - center)) > 0.0, "triangle {i} faces inward");
        }
        // Divergence theorem: signed volume equals the box volume.
        let vol: f64 = (0..12)
            .map(|i| {
                let t = m.triangle(i);
                t.a.coords.dot(&t.b.coords.cross(&t.c.coords)) / 6.0
            })
            .sum();
        assert!((vol - 6.0).abs() < 1e-12);
    }

    proptest! {
        // The closest point is no farther than any sampled point of the triangle.
        #[test]
        fn closest_point_is_minimal(px in -3.0..3.0f64, py in -3.0..3.0f64, pz in -3.0..3.0f64,
                                    u in 0.0..1.0f64, v in 0.0..1.0f64) {
            let t = Triangle::new(P3::new(0.1, -0.4, 0.3), P3::new(1.7, 0.2, -0.5), P3::new(-0.3, 1.1, 0.9));
            let p = P3::new(px, py, pz);
            let (u, v) = if u + v > 1.0 { (1.0 - u, 1.0 - v) } else { (u, v) };
            let q = t.at(u, v);
            prop_assert!(t.distance_sq(&p) <= (q - p).norm_squared() + 1e-12);
        }
    }
}
