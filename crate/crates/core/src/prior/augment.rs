use rand_distr::{Distribution, Normal};

use crate::schema::BuildingAbstraction;
use crate::seed;

/// Adds independent `N(0, sigma²)` noise to each HSV channel of every material
/// variation, clamping to `[0, 1]`. Geometry is untouched.
pub fn augment_colors(b: &BuildingAbstraction, seed: u64, sigma: f64) -> BuildingAbstraction {
    let mut out = b.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and nonnegative");
    let mut rng = seed::rng(seed, seed::stream::AUGMENT);
    for v in &mut out.material_variations {
        for c in &mut v.color {
            *c = (*c + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::box_building;
    use crate::schema::MaterialVariation;

    fn with_variations(n: usize) -> BuildingAbstraction {
        let mut b = box_building(10.0, 8.0, 2);
        b.material_variations =
            (0..n).map(|i| MaterialVariation { cell_type: i, material_slot: 0, color: [0.5, 0.5, 0.5] }).collect();
        b
    }

    #[test]
    fn zero_sigma_is_identity() {
        let b = with_variations(5);
        assert_eq!(augment_colors(&b, 3, 0.0), b);
    }

    #[test]
    fn geometry_untouched() {
        let b = with_variations(5);
        let a = augment_colors(&b, 3, 0.15);
        assert_ne!(a.material_variations, b.material_variations);
        let mut strip = a.clone();
        strip.material_variations = b.material_variations.clone();
        assert_eq!(strip, b);
    }

    #[test]
    fn channel_std_matches_sigma() {
        // Centered colors sit 3.3 sigma from the clamp bounds, so clamping
        // barely affects the spread.
        let b = with_variations(34_000);
        let a = augment_colors(&b, 17, 0.15);
        for k in 0..3 {
            let d: Vec<f64> = a.material_variations.iter().map(|v| v.color[k] - 0.5).collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
            let std = var.sqrt();
            assert!((std - 0.15).abs() / 0.15 < 0.05, "channel {k}: {std}");
        }
    }
}
