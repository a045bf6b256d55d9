use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{geometric_error, structural, MetricsReport};
use crate::prior::AssetCatalog;
use crate::render::PointCloud;
use crate::schema::BuildingAbstraction;

/// One evaluation item. The cloud, when present, is the observation the
/// building was inferred from, rendered at `noise_level`.
#[derive(Debug, Clone)]
pub struct EvalPair {
    pub inferred: BuildingAbstraction,
    pub truth: BuildingAbstraction,
    pub cloud: Option<PointCloud>,
    pub noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub sigma: f64,
    pub count: usize,
    pub inferred_error: f64,
    pub truth_error: f64,
}

/// Aggregates over a corpus. Every mean is `None` for an empty corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub count: usize,
    pub storey_count: Option<f64>,
    pub facade_count: Option<f64>,
    pub storey_structure: Option<f64>,
    pub asset_precision: Option<f64>,
    pub asset_recall: Option<f64>,
    pub material_variation_iou: Option<f64>,
    /// Mean over pairs whose color distance is defined.
    pub hsv_l2: Option<f64>,
    pub geometric_error: Option<f64>,
    pub curve: Vec<CurvePoint>,
    pub pairs: Vec<MetricsReport>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

/// Scores every pair (in parallel) and aggregates in input order. Pairs with
/// clouds also contribute to the error-versus-noise curve, grouped by
/// `noise_level` rounded to 1e-6.
pub fn evaluate_corpus(pairs: &[EvalPair], catalog: &AssetCatalog) -> CorpusReport {
    let scored: Vec<(MetricsReport, Option<f64>)> = pairs
        .par_iter()
        .map(|p| {
            let mut r = structural(&p.inferred, &p.truth);
            let truth_error = p.cloud.as_ref().and_then(|pc| {
                r.geometric_error = geometric_error(pc, &p.inferred, catalog).ok();
                geometric_error(pc, &p.truth, catalog).ok()
            });
            (r, truth_error)
        })
        .collect();

    let reports: Vec<&MetricsReport> = scored.iter().map(|(r, _)| r).collect();
    let frac = |f: fn(&MetricsReport) -> bool| mean(reports.iter().map(|r| if f(r) { 1.0 } else { 0.0 }));
    let avg = |f: fn(&MetricsReport) -> f64| mean(reports.iter().map(|r| f(r)));

    let mut groups: BTreeMap<i64, Vec<(f64, f64)>> = BTreeMap::new();
    for (p, (r, truth)) in pairs.iter().zip(&scored) {
        if let (Some(inf), Some(gt)) = (r.geometric_error, truth) {
            groups.entry((p.noise_level * 1e6).round() as i64).or_default().push((inf, *gt));
        }
    }
    let curve = groups
        .into_iter()
        .map(|(k, v)| CurvePoint {
            sigma: k as f64 / 1e6,
            count: v.len(),
            inferred_error: mean(v.iter().map(|x| x.0)).unwrap_or(0.0),
            truth_error: mean(v.iter().map(|x| x.1)).unwrap_or(0.0),
        })
        .collect();

    CorpusReport {
        count: pairs.len(),
        storey_count: frac(|r| r.storey_count_correct),
        facade_count: frac(|r| r.facade_count_correct),
        storey_structure: avg(|r| r.storey_structure_accuracy),
        asset_precision: avg(|r| r.asset_precision),
        asset_recall: avg(|r| r.asset_recall),
        material_variation_iou: avg(|r| r.material_variation_iou),
        hsv_l2: mean(reports.iter().filter(|r| r.hsv_l2_defined).map(|r| r.hsv_l2)),
        geometric_error: mean(reports.iter().filter_map(|r| r.geometric_error)),
        curve,
        pairs: reports.into_iter().cloned().collect(),
    }
}

impl CorpusReport {
    /// `(label, value, is_fraction)` in the order of the structural table.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>, bool)> {
        vec![
            ("Storey count", self.storey_count, true),
            ("Facade count", self.facade_count, true),
            ("Storey structure", self.storey_structure, true),
            ("Asset precision", self.asset_precision, true),
            ("Asset recall", self.asset_recall, true),
            ("Material variation IoU", self.material_variation_iou, true),
            ("HSV L2", self.hsv_l2, false),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        if self.count == 0 {
            return s;
        }
        for (label, v, _) in self.rows() {
            let _ = writeln!(s, "{label},{}", v.map_or(String::new(), |v| format!("{v:.6}")));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let width = self.rows().iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut s = format!("{:<width$}  {:>8}\n", "Structural evaluation", format!("n={}", self.count));
        if self.count == 0 {
            return s;
        }
        for (label, v, fraction) in self.rows() {
            let cell = match v {
                None => "-".to_string(),
                Some(v) if fraction => format!("{:.1}%", v * 100.0),
                Some(v) => format!("{v:.3}"),
            };
            let _ = writeln!(s, "{label:<width$}  {cell:>8}");
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("sigma,count,inferred_error,ground_truth_error\n");
        for c in &self.curve {
            let _ = writeln!(s, "{:.6},{},{:.9},{:.9}", c.sigma, c.count, c.inferred_error, c.truth_error);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_catalog, sample, PriorConfig};
    use crate::render::render_stages;

    fn pair(seed: u64, with_cloud: bool) -> (EvalPair, AssetCatalog) {
        let cat = build_catalog(0, 64).unwrap();
        let b = sample(seed, &PriorConfig::default(), &cat);
        let cloud = with_cloud.then(|| render_stages(&b, &cat, 0.5, 0.0, seed).unwrap().noisy);
        (EvalPair { inferred: b.clone(), truth: b, cloud, noise_level: 0.0 }, cat)
    }

    #[test]
    fn identical_pairs_score_perfectly() {
        let cat = build_catalog(0, 64).unwrap();
        let pairs: Vec<EvalPair> = (0..5).map(|s| pair(s, false).0).collect();
        let r = evaluate_corpus(&pairs, &cat);
        assert_eq!(r.count, 5);
        for (label, v, fraction) in r.rows() {
            if fraction {
                assert_eq!(v, Some(1.0), "{label}");
            }
        }
        assert!(r.hsv_l2.unwrap_or(0.0) == 0.0);
        let text = r.to_text();
        assert!(text.contains("Storey count") && text.contains("100.0%"));
        assert_eq!(r.to_csv().lines().count(), 8);
    }

    #[test]
    fn empty_corpus_is_an_empty_table() {
        let cat = build_catalog(0, 6).unwrap();
        let r = evaluate_corpus(&[], &cat);
        assert_eq!(r.count, 0);
        assert!(r.rows().iter().all(|row| row.1.is_none()));
        assert_eq!(r.to_csv(), "metric,value\n");
        assert!(r.curve.is_empty());
    }

    #[test]
    fn single_pair_matches_per_pair_report() {
        let (p, cat) = pair(3, true);
        let r = evaluate_corpus(std::slice::from_ref(&p), &cat);
        let mut single = structural(&p.inferred, &p.truth);
        single.geometric_error = Some(geometric_error(p.cloud.as_ref().unwrap(), &p.inferred, &cat).unwrap());
        assert_eq!(r.pairs, vec![single.clone()]);
        assert_eq!(r.storey_structure, Some(single.storey_structure_accuracy));
        assert_eq!(r.geometric_error, single.geometric_error);
        assert_eq!(r.curve.len(), 1);
        assert!(r.curve[0].truth_error < 1e-9);
    }
}
