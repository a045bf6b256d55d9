use std::collections::BTreeSet;
use std::fmt;

use super::BuildingAbstraction;

/// Modifier components and their admissible magnitude.
pub const MODIFIER_LIMIT: f64 = 5.0;
/// Smallest admissible `hypot(quaternion_3, quaternion_4)`; one scale/rotation
/// token step, so the quantized quaternion can never collapse to zero.
pub const MIN_QUATERNION_NORM: f64 = 0.01;
/// Shortest footprint segment that still defines a direction.
pub const MIN_SEGMENT_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.rule)
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn check(&mut self, ok: bool, path: impl FnOnce() -> String, rule: &str) {
        if !ok {
            self.0.push(Violation { path: path(), rule: rule.to_string() });
        }
    }
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

/// Checks every structural invariant of the abstraction language. An empty
/// result means the building is valid for a catalog of `catalog_size` assets.
pub fn validate(b: &BuildingAbstraction, catalog_size: usize) -> Vec<Violation> {
    let mut c = Collector(Vec::new());

    c.check(b.height.is_finite() && b.height > 0.0, || "height".into(), "height must be positive");
    c.check(unit(b.noise_level), || "noise_level".into(), "noise_level must lie in [0, 1]");

    c.check(!b.footprints.is_empty(), || "footprints".into(), "at least one footprint");
    for (fi, fp) in b.footprints.iter().enumerate() {
        let path = |s: &str| format!("footprints[{fi}]{s}");
        if fp.vertices.len() < 3 {
            c.check(false, || path(".vertices"), "at least three vertices");
            continue;
        }
        let finite = fp.vertices.iter().all(|v| v[0].is_finite() && v[1].is_finite());
        c.check(finite, || path(".vertices"), "vertex coordinates must be finite");
        if !finite {
            continue;
        }
        for s in 0..fp.segment_count() {
            c.check(
                fp.segment_length(s) >= MIN_SEGMENT_LENGTH,
                || format!("footprints[{fi}].segments[{s}]"),
                "degenerate segment",
            );
        }
        c.check(fp.is_simple(), || path(".vertices"), "polygon must be simple");
        c.check(fp.signed_area() > 0.0, || path(".vertices"), "polygon must be counter-clockwise");
    }

    c.check(!b.facades.is_empty(), || "facades".into(), "at least one facade");
    for (ai, facade) in b.facades.iter().enumerate() {
        let fp = b.footprints.get(facade.footprint_index);
        c.check(fp.is_some(), || format!("facades[{ai}].footprint_index"), "index out of range");
        c.check(!facade.cells_patterns.is_empty(), || format!("facades[{ai}].cells_patterns"), "at least one cells pattern");
        let segments = fp.map(|f| f.segment_count());
        let mut covered: BTreeSet<usize> = BTreeSet::new();
        for (pi, pattern) in facade.cells_patterns.iter().enumerate() {
            let ppath = |s: &str| format!("facades[{ai}].cells_patterns[{pi}]{s}");
            let (first, last) = pattern.segment_range;
            c.check(first <= last, || ppath(".segment_range"), "first segment after last segment");
            if let Some(n) = segments {
                c.check(last < n, || ppath(".segment_range"), "segment index out of range");
            }
            if first <= last {
                let overlap = (first..=last.min(first + 4096)).any(|s| !covered.insert(s));
                c.check(!overlap, || ppath(".segment_range"), "segment coverage overlaps another pattern");
            }
            c.check(!pattern.cells.is_empty(), || ppath(".cells"), "at least one cell");
            let mut prev = f64::NEG_INFINITY;
            for (ci, cell) in pattern.cells.iter().enumerate() {
                let cpath = |s: &str| format!("facades[{ai}].cells_patterns[{pi}].cells[{ci}]{s}");
                c.check(cell.cell_type < catalog_size, || cpath(".cell_type"), "asset index out of range");
                c.check(unit(cell.offset), || cpath(".offset"), "offset must lie in [0, 1]");
                c.check(!(cell.offset < prev), || cpath(".offset"), "offsets must be nondecreasing");
                prev = cell.offset;
                if let Some(m) = &cell.modifier {
                    let in_range = [m.scale_x, m.scale_y, m.quaternion_3, m.quaternion_4]
                        .iter()
                        .all(|v| v.is_finite() && v.abs() <= MODIFIER_LIMIT);
                    c.check(in_range, || cpath(".modifier"), "modifier values must lie in [-5, 5]");
                    c.check(m.quaternion_norm() >= MIN_QUATERNION_NORM, || cpath(".modifier"), "quaternion must not vanish");
                }
            }
        }
    }

    c.check(!b.storeys.is_empty(), || "storeys".into(), "at least one storey");
    let mut prev = f64::NEG_INFINITY;
    for (si, storey) in b.storeys.iter().enumerate() {
        c.check(storey.facade_index < b.facades.len(), || format!("storeys[{si}].facade_index"), "index out of range");
        c.check(
            storey.elevation >= 0.0 && storey.elevation <= b.height,
            || format!("storeys[{si}].elevation"),
            "elevation must lie in [0, height]",
        );
        c.check(!(storey.elevation < prev), || format!("storeys[{si}].elevation"), "storeys must be ordered by elevation");
        prev = storey.elevation;
    }

    let mut keys = BTreeSet::new();
    for (vi, mv) in b.material_variations.iter().enumerate() {
        c.check(mv.cell_type < catalog_size, || format!("material_variations[{vi}].cell_type"), "asset index out of range");
        c.check(
            mv.color.iter().all(|&x| unit(x)),
            || format!("material_variations[{vi}].color"),
            "color components must lie in [0, 1]",
        );
        c.check(
            keys.insert((mv.cell_type, mv.material_slot)),
            || format!("material_variations[{vi}]"),
            "duplicate variation for asset material",
        );
    }

    c.0
}

/// [`validate`] plus the check that every variation names an existing
/// material slot; `material_counts[i]` is the number of materials of asset `i`.
pub fn validate_with_catalog(b: &BuildingAbstraction, material_counts: &[usize]) -> Vec<Violation> {
    let mut out = validate(b, material_counts.len());
    for (vi, mv) in b.material_variations.iter().enumerate() {
        if let Some(&n) = material_counts.get(mv.cell_type) {
            if mv.material_slot >= n {
                out.push(Violation {
                    path: format!("material_variations[{vi}].material_slot"),
                    rule: "material slot out of range for asset".into(),
                });
            }
        }
    }
    out
}
