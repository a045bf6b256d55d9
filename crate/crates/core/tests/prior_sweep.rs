use std::collections::BTreeMap;

use procinv_core::codec::{Codec, MAX_SEQUENCE_LENGTH};
use procinv_core::prior::{build_catalog, sample_with_report, PriorConfig};
use procinv_core::schema::{validate, validate_with_catalog};
use rayon::prelude::*;

struct Stats {
    storeys: usize,
    shared_storeys: usize,
    assets: usize,
    tokens: usize,
    fallback: bool,
    violations: usize,
}

fn sweep(n: u64) -> Vec<Stats> {
    let catalog = build_catalog(0, 64).unwrap();
    let cfg = PriorConfig::default();
    let codec = Codec::for_catalog(64);
    let counts = catalog.material_counts();
    (0..n)
        .into_par_iter()
        .map(|seed| {
            let r = sample_with_report(seed, &cfg, &catalog);
            let b = &r.building;
            let mut uses: BTreeMap<usize, usize> = BTreeMap::new();
            for s in &b.storeys {
                *uses.entry(s.facade_index).or_default() += 1;
            }
            Stats {
                storeys: b.storeys.len(),
                shared_storeys: b.storeys.iter().filter(|s| uses[&s.facade_index] > 1).count(),
                assets: b.asset_types().len(),
                tokens: codec.encode(b).map(|t| t.len()).unwrap_or(usize::MAX),
                fallback: r.fallback,
                violations: validate(b, 64).len() + validate_with_catalog(b, &counts).len(),
            }
        })
        .collect()
}

#[test]
fn ten_thousand_samples_validate_and_encode() {
    let stats = sweep(10_000);
    let invalid = stats.iter().filter(|s| s.violations > 0).count();
    let too_long = stats.iter().filter(|s| s.tokens > MAX_SEQUENCE_LENGTH).count();
    let fallbacks = stats.iter().filter(|s| s.fallback).count();
    let storeys: usize = stats.iter().map(|s| s.storeys).sum();
    let shared: usize = stats.iter().map(|s| s.shared_storeys).sum();
    let share = shared as f64 / storeys as f64;
    let mut assets: Vec<usize> = stats.iter().map(|s| s.assets).collect();
    assets.sort_unstable();
    let mut tokens: Vec<usize> = stats.iter().map(|s| s.tokens).collect();
    tokens.sort_unstable();
    println!(
        "invalid {invalid}, too long {too_long}, fallbacks {fallbacks}, shared-facade storeys {share:.3}, \
         distinct assets p10/p50/p90 {}/{}/{}, tokens p50/p99/max {}/{}/{}",
        assets[1000], assets[5000], assets[9000], tokens[5000], tokens[9900], tokens[9999]
    );
    assert_eq!(invalid, 0);
    assert_eq!(too_long, 0);
    assert!(share > 0.3, "storey facade sharing {share}");
}
