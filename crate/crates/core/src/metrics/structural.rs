use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::schema::BuildingAbstraction;

/// Per-pair comparison of an inferred building against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub storey_count_correct: bool,
    pub facade_count_correct: bool,
    pub storey_structure_accuracy: f64,
    pub asset_precision: f64,
    pub asset_recall: f64,
    pub material_variation_iou: f64,
    pub hsv_l2: f64,
    /// False when no (asset, slot) pair carries a variation in both buildings;
    /// `hsv_l2` is then 0 and excluded from corpus means.
    pub hsv_l2_defined: bool,
    pub geometric_error: Option<f64>,
}

/// Index-free description of a facade: for each pattern the number of
/// segments it spans and its cells on the offset token grid.
pub fn facade_fingerprint(b: &BuildingAbstraction, facade: usize) -> String {
    let mut s = String::new();
    for p in &b.facades[facade].cells_patterns {
        let span = p.segment_range.1 as i64 - p.segment_range.0 as i64 + 1;
        let _ = write!(s, "[{span}:");
        for c in &p.cells {
            let _ = write!(s, "({},{}", c.cell_type, (c.offset / 0.005).round() as i64);
            if let Some(m) = &c.modifier {
                let q = |v: f64| (v / 0.01).round() as i64;
                let _ = write!(s, ",{},{},{},{}", q(m.scale_x), q(m.scale_y), q(m.quaternion_3), q(m.quaternion_4));
            }
            s.push(')');
        }
        s.push(']');
    }
    s
}

fn ranked_storeys(b: &BuildingAbstraction) -> Vec<usize> {
    let mut order: Vec<usize> = (0..b.storeys.len()).collect();
    order.sort_by(|&i, &j| b.storeys[i].elevation.total_cmp(&b.storeys[j].elevation));
    order.into_iter().map(|i| b.storeys[i].facade_index).collect()
}

/// `|x ∩ y| / |y|`, with an empty `y` scoring 1 only against an empty `x`.
fn coverage<T: Ord>(x: &BTreeSet<T>, y: &BTreeSet<T>) -> f64 {
    if y.is_empty() {
        return if x.is_empty() { 1.0 } else { 0.0 };
    }
    x.intersection(y).count() as f64 / y.len() as f64
}

pub fn structural(b_hat: &BuildingAbstraction, b_gt: &BuildingAbstraction) -> MetricsReport {
    let distinct =
        |b: &BuildingAbstraction| (0..b.facades.len()).map(|i| facade_fingerprint(b, i)).collect::<BTreeSet<_>>().len();

    let hat_ranked = ranked_storeys(b_hat);
    let gt_ranked = ranked_storeys(b_gt);
    let paired = hat_ranked.len().min(gt_ranked.len());
    let storey_structure_accuracy = if paired == 0 {
        if hat_ranked.len() == gt_ranked.len() {
            1.0
        } else {
            0.0
        }
    } else {
        let hits = hat_ranked
            .iter()
            .zip(&gt_ranked)
            .filter(|(&h, &g)| {
                h < b_hat.facades.len() && g < b_gt.facades.len() && facade_fingerprint(b_hat, h) == facade_fingerprint(b_gt, g)
            })
            .count();
        hits as f64 / paired as f64
    };

    let assets_hat = b_hat.asset_types();
    let assets_gt = b_gt.asset_types();

    let variations = |b: &BuildingAbstraction| -> BTreeMap<(usize, usize), [f64; 3]> {
        b.material_variations.iter().map(|v| ((v.cell_type, v.material_slot), v.color)).collect()
    };
    let var_hat = variations(b_hat);
    let var_gt = variations(b_gt);
    let keys_hat: BTreeSet<_> = var_hat.keys().copied().collect();
    let keys_gt: BTreeSet<_> = var_gt.keys().copied().collect();
    let inter: Vec<_> = keys_hat.intersection(&keys_gt).copied().collect();
    let union = keys_hat.union(&keys_gt).count();
    let material_variation_iou = if union == 0 { 1.0 } else { inter.len() as f64 / union as f64 };
    let hsv_l2 = if inter.is_empty() {
        0.0
    } else {
        inter
            .iter()
            .map(|k| {
                let (a, b) = (var_hat[k], var_gt[k]);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .sum::<f64>()
            / inter.len() as f64
    };

    MetricsReport {
        storey_count_correct: b_hat.storeys.len() == b_gt.storeys.len(),
        facade_count_correct: distinct(b_hat) == distinct(b_gt),
        storey_structure_accuracy,
        asset_precision: coverage(&assets_gt, &assets_hat),
        asset_recall: coverage(&assets_hat, &assets_gt),
        material_variation_iou,
        hsv_l2,
        hsv_l2_defined: !inter.is_empty(),
        geometric_error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::box_building;
    use crate::schema::{Facade, MaterialVariation, Storey};

    fn with_assets(types: &[usize]) -> BuildingAbstraction {
        let mut b = box_building(10.0, 8.0, 1);
        for (p, &t) in b.facades[0].cells_patterns.iter_mut().zip(types.iter().cycle()) {
            p.cells[0].cell_type = t;
        }
        // Extra types go into additional cells on the first pattern.
        for (i, &t) in types.iter().enumerate().skip(4) {
            b.facades[0].cells_patterns[0].cells.push(crate::schema::Cell {
                cell_type: t,
                offset: 0.1 * i as f64,
                modifier: None,
            });
        }
        b
    }

    fn var(t: usize, s: usize, c: [f64; 3]) -> MaterialVariation {
        MaterialVariation { cell_type: t, material_slot: s, color: c }
    }

    #[test]
    fn identity_is_perfect() {
        let b = box_building(10.0, 8.0, 3);
        let r = structural(&b, &b);
        assert!(r.storey_count_correct && r.facade_count_correct);
        assert_eq!(
            (r.storey_structure_accuracy, r.asset_precision, r.asset_recall, r.material_variation_iou, r.hsv_l2),
            (1.0, 1.0, 1.0, 1.0, 0.0)
        );
        assert!(!r.hsv_l2_defined);
    }

    #[test]
    fn asset_set_arithmetic() {
        let gt = with_assets(&[1, 2, 3, 1]);
        let hat = with_assets(&[2, 3, 4, 2]);
        let r = structural(&hat, &gt);
        assert_eq!(r.asset_precision, 2.0 / 3.0);
        assert_eq!(r.asset_recall, 2.0 / 3.0);
        let hat = with_assets(&[2, 2, 2, 2]);
        let r = structural(&hat, &gt);
        assert_eq!((r.asset_precision, r.asset_recall), (1.0, 1.0 / 3.0));
        assert_eq!(structural(&gt, &hat).asset_precision, r.asset_recall);
    }

    #[test]
    fn variation_iou_and_color_distance() {
        let mut a = box_building(10.0, 8.0, 1);
        let mut b = a.clone();
        a.material_variations = vec![var(0, 0, [0.1, 0.2, 0.3]), var(1, 0, [0.5, 0.5, 0.5])];
        b.material_variations = vec![var(1, 0, [0.5, 0.8, 0.9]), var(2, 0, [0.0; 3])];
        let r = structural(&a, &b);
        assert_eq!(r.material_variation_iou, 1.0 / 3.0);
        assert!((r.hsv_l2 - 0.5).abs() < 1e-12);
        assert!(r.hsv_l2_defined);
    }

    #[test]
    fn storey_structure_is_index_free() {
        // Two facades listed in opposite order describe the same building.
        let mut a = box_building(10.0, 8.0, 2);
        let mut alt = a.facades[0].clone();
        alt.cells_patterns[0].cells[0].cell_type = 5;
        a.facades.push(alt);
        a.storeys[1].facade_index = 1;
        let mut b = a.clone();
        b.facades.swap(0, 1);
        b.storeys = vec![Storey { elevation: 0.0, facade_index: 1 }, Storey { elevation: 3.0, facade_index: 0 }];
        let r = structural(&a, &b);
        assert_eq!(r.storey_structure_accuracy, 1.0);
        assert!(r.facade_count_correct);
        // Linking the upper storey to the ground facade breaks one of two pairs.
        b.storeys[1].facade_index = 1;
        assert_eq!(structural(&a, &b).storey_structure_accuracy, 0.5);
    }

    #[test]
    fn storey_count_mismatch_pairs_prefix() {
        let a = box_building(10.0, 8.0, 2);
        let mut b = box_building(10.0, 8.0, 4);
        b.facades.push(Facade { footprint_index: 0, cells_patterns: b.facades[0].cells_patterns[..1].to_vec() });
        b.storeys[1].facade_index = 1;
        let r = structural(&a, &b);
        assert!(!r.storey_count_correct);
        assert!(!r.facade_count_correct);
        assert_eq!(r.storey_structure_accuracy, 0.5);
    }
}
