use std::cmp::Ordering;

use super::{BuildingAbstraction, Cell, CellsPattern};

/// Brings a building into the unique representative form used for equality
/// checks and encoding:
///
/// - footprints counter-clockwise, starting at the lexicographically smallest
///   vertex that does not split a segment range of a referencing pattern;
/// - patterns ordered by first segment;
/// - storeys ordered by elevation (stable, facade links kept);
/// - material variations ordered by `(cell_type, material_slot)`.
///
/// Reversing a clockwise footprint remaps segment ranges and mirrors cell
/// offsets so that each cell keeps its span interval.
pub fn canonicalize(b: &BuildingAbstraction) -> BuildingAbstraction {
    let mut out = b.clone();

    for fi in 0..out.footprints.len() {
        let n = out.footprints[fi].vertices.len();
        if n < 3 {
            continue;
        }
        if out.footprints[fi].signed_area() < 0.0 {
            reverse_footprint(&mut out, fi);
        }
        let r = canonical_start(&out, fi);
        if r != 0 {
            rotate_footprint(&mut out, fi, r);
        }
    }

    for facade in &mut out.facades {
        facade.cells_patterns.sort_by_key(|p| p.segment_range.0);
    }
    out.storeys.sort_by(|a, b| a.elevation.total_cmp(&b.elevation));
    out.material_variations.sort_by_key(|m| (m.cell_type, m.material_slot));
    out
}

fn patterns_on(b: &mut BuildingAbstraction, footprint: usize) -> impl Iterator<Item = &mut CellsPattern> {
    b.facades.iter_mut().filter(move |f| f.footprint_index == footprint).flat_map(|f| f.cells_patterns.iter_mut())
}

fn reverse_footprint(b: &mut BuildingAbstraction, fi: usize) {
    let old = b.footprints[fi].vertices.clone();
    let n = old.len();
    b.footprints[fi].vertices = (0..n).map(|j| old[(n - j) % n]).collect();
    // Old segment s becomes new segment n - 1 - s, traversed backwards.
    for pattern in patterns_on(b, fi) {
        let (first, last) = pattern.segment_range;
        if last < n && first <= last {
            pattern.segment_range = (n - 1 - last, n - 1 - first);
        }
        let cells = &pattern.cells;
        let mirrored: Vec<Cell> = (0..cells.len())
            .rev()
            .map(|i| {
                let end = cells.get(i + 1).map_or(1.0, |c| c.offset);
                Cell { offset: (1.0 - end).clamp(0.0, 1.0), ..cells[i].clone() }
            })
            .collect();
        pattern.cells = mirrored;
    }
}

fn lex(a: &[f64; 2], b: &[f64; 2]) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

fn canonical_start(b: &BuildingAbstraction, fi: usize) -> usize {
    let verts = &b.footprints[fi].vertices;
    let ranges: Vec<(usize, usize)> = b
        .facades
        .iter()
        .filter(|f| f.footprint_index == fi)
        .flat_map(|f| f.cells_patterns.iter().map(|p| p.segment_range))
        .collect();
    // Starting at vertex j keeps every range contiguous unless j lies strictly
    // inside one (segments j - 1 and j both covered).
    let admissible = |j: usize| ranges.iter().all(|&(a, z)| !(a < j && j <= z));
    (0..verts.len()).filter(|&j| admissible(j)).min_by(|&i, &j| lex(&verts[i], &verts[j]).then(i.cmp(&j))).unwrap_or(0)
}

fn rotate_footprint(b: &mut BuildingAbstraction, fi: usize, r: usize) {
    let n = b.footprints[fi].vertices.len();
    b.footprints[fi].vertices.rotate_left(r);
    for pattern in patterns_on(b, fi) {
        let (first, last) = pattern.segment_range;
        if last < n && first <= last {
            let shift = |s: usize| (s + n - r) % n;
            pattern.segment_range = (shift(first), shift(last));
        }
    }
}
