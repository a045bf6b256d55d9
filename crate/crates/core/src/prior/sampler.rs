use std::f64::consts::TAU;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{AssetCatalog, AssetKind, PriorConfig};
use crate::codec::{Codec, GroupKind, MAX_SEQUENCE_LENGTH};
use crate::schema::{
    canonicalize, validate, validate_with_catalog, BuildingAbstraction, Cell, CellModifier, CellsPattern, Facade, Footprint,
    MaterialVariation, Storey,
};
use crate::seed;

/// Attempts before the sampler gives up and returns [`minimal_building`].
pub const MAX_ATTEMPTS: u64 = 100;

/// Shortest footprint wall the sampler produces, meters.
const MIN_WALL: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Sampled {
    pub building: BuildingAbstraction,
    /// Number of attempts used, including the successful one.
    pub attempts: u64,
    /// Set when every attempt failed and the minimal building was returned.
    pub fallback: bool,
}

/// Draws one building. The result is canonical, valid for `catalog`, lies on
/// the token grid and encodes within the sequence-length limit.
pub fn sample(seed: u64, cfg: &PriorConfig, catalog: &AssetCatalog) -> BuildingAbstraction {
    sample_with_report(seed, cfg, catalog).building
}

pub fn sample_with_report(seed: u64, cfg: &PriorConfig, catalog: &AssetCatalog) -> Sampled {
    let codec = Codec::for_catalog(catalog.len());
    let counts = catalog.material_counts();
    for attempt in 0..MAX_ATTEMPTS {
        // Later attempts shrink every count range towards its minimum.
        let complexity = 1.0 - attempt as f64 / MAX_ATTEMPTS as f64;
        let mut rng = seed::rng(seed::mix(seed, attempt), seed::stream::PRIOR);
        let Some(raw) = Draw { rng: &mut rng, cfg, catalog, codec: &codec, complexity }.building() else {
            continue;
        };
        let Ok(b) = codec.quantize_building(&canonicalize(&raw)) else {
            continue;
        };
        if canonicalize(&b) != b || !validate(&b, catalog.len()).is_empty() || !validate_with_catalog(&b, &counts).is_empty() {
            log::debug!("seed {seed} attempt {attempt}: rejected invalid draw");
            continue;
        }
        match codec.encode(&b) {
            Ok(t) if t.len() <= MAX_SEQUENCE_LENGTH => return Sampled { building: b, attempts: attempt + 1, fallback: false },
            Ok(t) => log::debug!("seed {seed} attempt {attempt}: {} tokens", t.len()),
            Err(e) => log::debug!("seed {seed} attempt {attempt}: {e}"),
        }
    }
    log::warn!("seed {seed}: no acceptable building after {MAX_ATTEMPTS} attempts, using the minimal building");
    Sampled { building: minimal_building(catalog), attempts: MAX_ATTEMPTS, fallback: true }
}

/// A 10 m x 8 m single-storey box of plain wall panels.
pub fn minimal_building(catalog: &AssetCatalog) -> BuildingAbstraction {
    let wall = catalog.of_kind(AssetKind::WallPanel).first().copied().unwrap_or(0);
    let b = BuildingAbstraction {
        height: 3.0,
        footprints: vec![Footprint { vertices: vec![[-5.0, -4.0], [5.0, -4.0], [5.0, 4.0], [-5.0, 4.0]] }],
        facades: vec![Facade {
            footprint_index: 0,
            cells_patterns: (0..4)
                .map(|i| CellsPattern {
                    segment_range: (i, i),
                    cells: vec![Cell { cell_type: wall, offset: 0.0, modifier: None }],
                })
                .collect(),
        }],
        storeys: vec![Storey { elevation: 0.0, facade_index: 0 }],
        material_variations: vec![],
        noise_level: 0.0,
    };
    canonicalize(&b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Ground,
    Middle,
    Top,
}

#[derive(Debug, Clone, Copy)]
enum Rhythm {
    Windows,
    Framed,
    Pilasters,
    Blank,
}

#[derive(Debug, Clone)]
struct Style {
    walls: [usize; 2],
    windows: Vec<usize>,
    door: usize,
    pillars: [usize; 2],
    crown: usize,
    /// Rhythms for even and odd segments.
    rhythms: [Rhythm; 2],
    crown_everywhere: bool,
}

struct Draw<'a> {
    rng: &'a mut ChaCha8Rng,
    cfg: &'a PriorConfig,
    catalog: &'a AssetCatalog,
    codec: &'a Codec,
    complexity: f64,
}

impl Draw<'_> {
    fn snap(&self, v: f64, g: GroupKind) -> f64 {
        self.codec.vocab().snap(v, g)
    }

    fn upper(&self, r: [usize; 2]) -> usize {
        r[0] + ((r[1] - r[0]) as f64 * self.complexity).round() as usize
    }

    fn count(&mut self, r: [usize; 2]) -> usize {
        let hi = self.upper(r);
        self.rng.random_range(r[0]..=hi)
    }

    fn uniform(&mut self, r: [f64; 2]) -> f64 {
        if r[0] == r[1] {
            r[0]
        } else {
            self.rng.random_range(r[0]..r[1])
        }
    }

    fn pick(&mut self, kind: AssetKind) -> usize {
        let options = self.catalog.of_kind(kind);
        *options.choose(self.rng).expect("catalog holds every kind")
    }

    fn building(mut self) -> Option<BuildingAbstraction> {
        let cfg = self.cfg;
        let main = self.footprint()?;
        let n = self.count(cfg.storeys);
        let mut footprints = vec![main];
        let setback = if n >= 3 && self.rng.random_bool(cfg.setback_probability) {
            let at = self.rng.random_range(n.div_ceil(3)..n);
            self.setback(&footprints[0]).map(|fp| {
                footprints.push(fp);
                at
            })
        } else {
            None
        };

        // Storey heights: a taller ground floor, then regular floors.
        let regular = self.uniform([cfg.storey_height[0], cfg.storey_height[1].min(cfg.storey_height[0].max(4.0))]);
        let ground = self.uniform([regular, cfg.storey_height[1].max(regular)]);
        let height = self.snap(ground + (n - 1) as f64 * regular, GroupKind::AbsoluteCoord);
        if height <= 0.0 {
            return None;
        }
        let vocab = self.codec.vocab();
        let storey_z: Vec<f64> = (0..n)
            .map(|i| {
                let z = if i == 0 { 0.0 } else { ground + (i - 1) as f64 * regular };
                let k = vocab.quantize_local(z / height, GroupKind::RelativeCoord);
                height * vocab.dequantize_local(GroupKind::RelativeCoord, k)
            })
            .collect();

        let cell_width = self.uniform(cfg.cell_width);
        let mut facades = Vec::new();
        let mut storey_facade = vec![0usize; n];
        let groups: Vec<(usize, std::ops::Range<usize>)> = match setback {
            Some(at) => vec![(0, 0..at), (1, at..n)],
            None => vec![(0, 0..n)],
        };
        let budget_total = self.count([cfg.facades[0], cfg.facades[1].max(cfg.facades[0])]);
        for (gi, (fpi, range)) in groups.iter().enumerate() {
            let budget = if groups.len() == 1 { budget_total } else { self.rng.random_range(1..=2) };
            let bottom = range.start == 0;
            let top_group = gi == groups.len() - 1;
            let len = range.len();
            let want_top = top_group && len >= 2 && self.rng.random_bool(0.7);
            let specials = bottom as usize + want_top as usize;
            let middles = len - specials;
            // Roles in storey order; with too small a budget everything shares one facade.
            let mut roles = Vec::new();
            let mut assignment = Vec::with_capacity(len);
            if budget < specials + (middles > 0) as usize {
                roles.push(if bottom { Role::Ground } else { Role::Middle });
                assignment.resize(len, 0);
            } else {
                let m = if middles > 0 { (budget - specials).clamp(1, middles) } else { 0 };
                let blocked = self.rng.random_bool(0.5);
                if bottom {
                    roles.push(Role::Ground);
                }
                let first_middle = roles.len();
                roles.extend(std::iter::repeat_n(Role::Middle, m));
                if want_top {
                    roles.push(Role::Top);
                }
                for local in 0..len {
                    if bottom && local == 0 {
                        assignment.push(0);
                    } else if want_top && local == len - 1 {
                        assignment.push(roles.len() - 1);
                    } else {
                        let mi = local - bottom as usize;
                        let slot = if blocked { mi * m / middles } else { mi % m };
                        assignment.push(first_middle + slot);
                    }
                }
            }
            let base = facades.len();
            for role in roles {
                let f = self.facade(*fpi, &footprints[*fpi], role, cell_width, regular);
                facades.push(f);
            }
            for (local, a) in assignment.into_iter().enumerate() {
                storey_facade[range.start + local] = base + a;
            }
        }

        let storeys =
            storey_z.iter().zip(&storey_facade).map(|(&elevation, &facade_index)| Storey { elevation, facade_index }).collect();
        let mut b = BuildingAbstraction { height, footprints, facades, storeys, material_variations: vec![], noise_level: 0.0 };
        b.material_variations = self.variations(&b);
        let noise = self.uniform(cfg.noise_level);
        b.noise_level = self.snap(noise, GroupKind::NoiseLevel);
        Some(b)
    }

    fn footprint(&mut self) -> Option<Footprint> {
        let cfg = self.cfg;
        for _ in 0..20 {
            let r_hi = cfg.footprint_radius[0] + (cfg.footprint_radius[1] - cfg.footprint_radius[0]) * self.complexity.max(0.3);
            let r = self.uniform([cfg.footprint_radius[0], r_hi]);
            let n = self.count(cfg.footprint_vertices);
            let raw: Vec<[f64; 2]> = if self.rng.random_bool(cfg.rectangle_probability) {
                let w = r * self.rng.random_range(0.7..1.4);
                let d = r * self.rng.random_range(0.7..1.4);
                vec![[-w, -d], [w, -d], [w, d], [-w, d]]
            } else {
                let phase = self.rng.random_range(0.0..TAU);
                (0..n)
                    .map(|i| {
                        let a = phase + TAU * (i as f64 + self.rng.random_range(-0.3..0.3)) / n as f64;
                        let ri = r * self.rng.random_range(0.65..1.0);
                        [ri * a.cos(), ri * a.sin()]
                    })
                    .collect()
            };
            if let Some(fp) = self.admissible(raw) {
                return Some(fp);
            }
        }
        None
    }

    /// Snaps to the coordinate grid and keeps the polygon only if it is
    /// simple, counter-clockwise and has no short walls.
    fn admissible(&self, raw: Vec<[f64; 2]>) -> Option<Footprint> {
        let vertices =
            raw.iter().map(|v| [self.snap(v[0], GroupKind::AbsoluteCoord), self.snap(v[1], GroupKind::AbsoluteCoord)]).collect();
        let fp = Footprint { vertices };
        let ok = fp.is_simple()
            && fp.signed_area() > 0.0
            && (0..fp.segment_count()).all(|i| fp.segment_length(i) >= MIN_WALL)
            && fp.vertices.iter().all(|v| v[0].abs() < 99.0 && v[1].abs() < 99.0);
        ok.then_some(fp)
    }

    fn setback(&mut self, fp: &Footprint) -> Option<Footprint> {
        let n = fp.vertices.len() as f64;
        let cx = fp.vertices.iter().map(|v| v[0]).sum::<f64>() / n;
        let cy = fp.vertices.iter().map(|v| v[1]).sum::<f64>() / n;
        let s = self.rng.random_range(0.6..0.85);
        let raw = fp.vertices.iter().map(|v| [cx + (v[0] - cx) * s, cy + (v[1] - cy) * s]).collect();
        self.admissible(raw)
    }

    fn style(&mut self) -> Style {
        const RHYTHMS: [Rhythm; 6] =
            [Rhythm::Windows, Rhythm::Framed, Rhythm::Framed, Rhythm::Pilasters, Rhythm::Pilasters, Rhythm::Blank];
        let rhythms = [*RHYTHMS.choose(self.rng).unwrap(), *RHYTHMS.choose(self.rng).unwrap()];
        let crown_kind = if self.rng.random_bool(0.3) { AssetKind::RoofTile } else { AssetKind::Cornice };
        let n_windows = self.rng.random_range(2..=4);
        Style {
            walls: [self.pick(AssetKind::WallPanel), self.pick(AssetKind::WallPanel)],
            windows: (0..n_windows).map(|_| self.pick(AssetKind::WindowPanel)).collect(),
            door: self.pick(AssetKind::DoorPanel),
            pillars: [self.pick(AssetKind::Pillar), self.pick(AssetKind::Pillar)],
            crown: self.pick(crown_kind),
            rhythms,
            crown_everywhere: self.rng.random_bool(0.5),
        }
    }

    fn facade(&mut self, footprint_index: usize, fp: &Footprint, role: Role, cell_width: f64, storey_height: f64) -> Facade {
        let style = self.style();
        let nseg = fp.segment_count();
        let door_segment = (0..nseg).max_by(|&a, &b| fp.segment_length(a).total_cmp(&fp.segment_length(b))).unwrap_or(0);
        let cmax = self.upper(self.cfg.cells_per_segment);
        let cells_patterns = (0..nseg)
            .map(|seg| {
                let len = fp.segment_length(seg);
                let m = ((len / cell_width).round() as usize).clamp(self.cfg.cells_per_segment[0], cmax);
                let (a, b) = fp.segment(seg);
                let yaw = (b[1] - a[1]).atan2(b[0] - a[0]);
                let cells = (0..m)
                    .map(|j| {
                        let cell_type = self.cell_type(&style, role, seg, j, m, seg == door_segment);
                        let offset = self.snap(j as f64 / m as f64, GroupKind::RelativeCoord);
                        let modifier = self
                            .rng
                            .random_bool(self.cfg.modifier_probability)
                            .then(|| self.modifier(yaw, len / m as f64, storey_height));
                        Cell { cell_type, offset, modifier }
                    })
                    .collect();
                CellsPattern { segment_range: (seg, seg), cells }
            })
            .collect();
        Facade { footprint_index, cells_patterns }
    }

    fn cell_type(&self, s: &Style, role: Role, seg: usize, j: usize, m: usize, door_segment: bool) -> usize {
        let window = s.windows[(seg + j) % s.windows.len()];
        let filler = if role == Role::Top { s.crown } else { s.walls[seg % 2] };
        if role == Role::Ground && door_segment && j == m / 2 {
            return s.door;
        }
        if role == Role::Top && s.crown_everywhere {
            return s.crown;
        }
        match s.rhythms[seg % 2] {
            Rhythm::Windows => window,
            Rhythm::Framed if m >= 3 && (j == 0 || j == m - 1) => filler,
            Rhythm::Framed => window,
            Rhythm::Pilasters if j % 2 == 1 => s.pillars[seg % 2],
            Rhythm::Pilasters => window,
            Rhythm::Blank => filler,
        }
    }

    /// Explicit placement close to the derived one: slightly resized and
    /// turned a little off the wall direction.
    fn modifier(&mut self, yaw: f64, width: f64, storey_height: f64) -> CellModifier {
        use GroupKind::ScaleRotation as S;
        let turn = yaw + self.rng.random_range(-0.3..0.3);
        let sx = (width * self.rng.random_range(0.7..1.0)).clamp(0.1, 5.0);
        let sy = (storey_height * self.rng.random_range(0.7..1.0)).clamp(0.1, 5.0);
        CellModifier {
            scale_x: self.snap(sx, S),
            scale_y: self.snap(sy, S),
            quaternion_3: self.snap((turn / 2.0).sin(), S),
            quaternion_4: self.snap((turn / 2.0).cos(), S),
        }
    }

    fn variations(&mut self, b: &BuildingAbstraction) -> Vec<MaterialVariation> {
        let mut out = Vec::new();
        for asset in b.asset_types() {
            if !self.rng.random_bool(self.cfg.variation_probability) {
                continue;
            }
            let slots = self.catalog.assets[asset].materials.len();
            let first = self.rng.random_range(0..slots);
            for slot in 0..slots {
                if slot != first && !self.rng.random_bool(0.3) {
                    continue;
                }
                let raw: [f64; 3] = [0, 1, 2].map(|_| self.rng.random_range(0.0..=1.0));
                let color = raw.map(|c| self.snap(c, GroupKind::RelativeCoord));
                out.push(MaterialVariation { cell_type: asset, material_slot: slot, color });
            }
        }
        out
    }
}
