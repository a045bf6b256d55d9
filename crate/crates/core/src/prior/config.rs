use serde::{Deserialize, Serialize};

use super::PriorError;

/// Knobs of the procedural building sampler. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub footprint_vertices: [usize; 2],
    /// Circumradius of the main footprint, meters.
    pub footprint_radius: [f64; 2],
    pub storeys: [usize; 2],
    pub storey_height: [f64; 2],
    pub facades: [usize; 2],
    pub cells_per_segment: [usize; 2],
    /// Target width of one facade cell, meters.
    pub cell_width: [f64; 2],
    pub rectangle_probability: f64,
    pub setback_probability: f64,
    pub modifier_probability: f64,
    pub variation_probability: f64,
    pub hsv_sigma: f64,
    pub augmented_fraction: f64,
    pub noise_level: [f64; 2],
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            footprint_vertices: [3, 8],
            footprint_radius: [4.0, 30.0],
            storeys: [1, 12],
            storey_height: [2.5, 5.0],
            facades: [1, 4],
            cells_per_segment: [1, 8],
            cell_width: [1.5, 4.0],
            rectangle_probability: 0.35,
            setback_probability: 0.2,
            modifier_probability: 0.02,
            variation_probability: 0.3,
            hsv_sigma: 0.15,
            augmented_fraction: 0.5,
            noise_level: [0.0, 0.5],
        }
    }
}

impl PriorConfig {
    pub fn check(&self) -> Result<(), PriorError> {
        let bad = |what: &str| Err(PriorError::InvalidConfig(what.to_string()));
        let ordered_u = |r: [usize; 2]| r[0] <= r[1];
        let ordered_f = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !ordered_u(self.footprint_vertices) || self.footprint_vertices[0] < 3 {
            return bad("footprint_vertices must be an ordered range starting at 3 or more");
        }
        if !ordered_f(self.footprint_radius) || self.footprint_radius[0] <= 1.0 || self.footprint_radius[1] > 60.0 {
            return bad("footprint_radius must be an ordered range within (1, 60] m");
        }
        if !ordered_u(self.storeys) || self.storeys[0] < 1 {
            return bad("storeys must be an ordered range starting at 1 or more");
        }
        if !ordered_f(self.storey_height) || self.storey_height[0] < 1.0 {
            return bad("storey_height must be an ordered range of at least 1 m");
        }
        if self.storeys[1] as f64 * self.storey_height[1] > 100.0 {
            return bad("tallest building exceeds 100 m");
        }
        if !ordered_u(self.facades) || self.facades[0] < 1 {
            return bad("facades must be an ordered range starting at 1 or more");
        }
        if !ordered_u(self.cells_per_segment) || self.cells_per_segment[0] < 1 {
            return bad("cells_per_segment must be an ordered range starting at 1 or more");
        }
        if !ordered_f(self.cell_width) || self.cell_width[0] <= 0.0 {
            return bad("cell_width must be an ordered positive range");
        }
        for (name, p) in [
            ("rectangle_probability", self.rectangle_probability),
            ("setback_probability", self.setback_probability),
            ("modifier_probability", self.modifier_probability),
            ("variation_probability", self.variation_probability),
            ("augmented_fraction", self.augmented_fraction),
        ] {
            if !prob(p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.hsv_sigma >= 0.0) {
            return bad("hsv_sigma must be nonnegative");
        }
        if !ordered_f(self.noise_level) || self.noise_level[0] < 0.0 || self.noise_level[1] > 1.0 {
            return bad("noise_level must be an ordered range within [0, 1]");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_serializes() {
        let c = PriorConfig::default();
        c.check().unwrap();
        let back: PriorConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: PriorConfig = serde_json::from_str(r#"{"storeys": [2, 3]}"#).unwrap();
        assert_eq!(partial.storeys, [2, 3]);
        assert_eq!(partial.facades, c.facades);
    }

    #[test]
    fn rejects_bad_ranges() {
        let c = PriorConfig { storeys: [4, 2], ..Default::default() };
        assert!(c.check().is_err());
        let c = PriorConfig { modifier_probability: 1.5, ..Default::default() };
        assert!(c.check().is_err());
        assert!(serde_json::from_str::<PriorConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
