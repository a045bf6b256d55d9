//! Little-endian binary form of [`BuildingAbstraction`].
//!
//! ```text
//! u16 version
//! f64 height, f64 noise_level
//! u32 n, n × footprint   { u32 m, m × (f64 x, f64 y) }
//! u32 n, n × facade      { u32 footprint_index, u32 p, p × pattern }
//!        pattern         { u32 first, u32 last, u32 c, c × cell }
//!        cell            { u32 cell_type, f64 offset, u8 flag, [4 × f64 modifier] }
//! u32 n, n × storey      { f64 elevation, u32 facade_index }
//! u32 n, n × variation   { u32 cell_type, u32 material_slot, 3 × f64 color }
//! ```

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::DatasetError;
use crate::schema::{BuildingAbstraction, Cell, CellModifier, CellsPattern, Facade, Footprint, MaterialVariation, Storey};

pub const BUILDING_FORMAT_VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.write_u32::<LittleEndian>(u32::try_from(v).expect("count fits in u32")).unwrap();
}

fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.write_f64::<LittleEndian>(v).unwrap();
}

pub fn building_to_bytes(b: &BuildingAbstraction) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    out.write_u16::<LittleEndian>(BUILDING_FORMAT_VERSION).unwrap();
    put_f64(&mut out, b.height);
    put_f64(&mut out, b.noise_level);
    put_u32(&mut out, b.footprints.len());
    for f in &b.footprints {
        put_u32(&mut out, f.vertices.len());
        for v in &f.vertices {
            put_f64(&mut out, v[0]);
            put_f64(&mut out, v[1]);
        }
    }
    put_u32(&mut out, b.facades.len());
    for f in &b.facades {
        put_u32(&mut out, f.footprint_index);
        put_u32(&mut out, f.cells_patterns.len());
        for p in &f.cells_patterns {
            put_u32(&mut out, p.segment_range.0);
            put_u32(&mut out, p.segment_range.1);
            put_u32(&mut out, p.cells.len());
            for c in &p.cells {
                put_u32(&mut out, c.cell_type);
                put_f64(&mut out, c.offset);
                match &c.modifier {
                    None => out.push(0),
                    Some(m) => {
                        out.push(1);
                        for v in [m.scale_x, m.scale_y, m.quaternion_3, m.quaternion_4] {
                            put_f64(&mut out, v);
                        }
                    }
                }
            }
        }
    }
    put_u32(&mut out, b.storeys.len());
    for s in &b.storeys {
        put_f64(&mut out, s.elevation);
        put_u32(&mut out, s.facade_index);
    }
    put_u32(&mut out, b.material_variations.len());
    for v in &b.material_variations {
        put_u32(&mut out, v.cell_type);
        put_u32(&mut out, v.material_slot);
        for c in v.color {
            put_f64(&mut out, c);
        }
    }
    out
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.cur.get_ref().len() - self.cur.position() as usize
    }

    fn u8(&mut self) -> Result<u8, DatasetError> {
        self.cur.read_u8().map_err(|_| truncated())
    }

    fn u32(&mut self) -> Result<usize, DatasetError> {
        self.cur.read_u32::<LittleEndian>().map(|v| v as usize).map_err(|_| truncated())
    }

    fn f64(&mut self) -> Result<f64, DatasetError> {
        self.cur.read_f64::<LittleEndian>().map_err(|_| truncated())
    }

    /// A count whose items occupy at least `item_bytes` each; rejects counts
    /// the remaining input cannot hold before anything is allocated.
    fn count(&mut self, what: &str, item_bytes: usize) -> Result<usize, DatasetError> {
        let n = self.u32()?;
        if n.saturating_mul(item_bytes) > self.remaining() {
            return Err(DatasetError::Format(format!("{what} count {n} exceeds remaining {} bytes", self.remaining())));
        }
        Ok(n)
    }
}

fn truncated() -> DatasetError {
    DatasetError::Format("building bytes truncated".into())
}

pub fn building_from_bytes(bytes: &[u8]) -> Result<BuildingAbstraction, DatasetError> {
    let mut r = Reader { cur: Cursor::new(bytes) };
    let version = r.cur.read_u16::<LittleEndian>().map_err(|_| truncated())?;
    if version != BUILDING_FORMAT_VERSION {
        return Err(DatasetError::Format(format!("building format version {version}, expected {BUILDING_FORMAT_VERSION}")));
    }
    let height = r.f64()?;
    let noise_level = r.f64()?;

    let mut footprints = Vec::new();
    for _ in 0..r.count("footprint", 4)? {
        let m = r.count("vertex", 16)?;
        let mut vertices = Vec::with_capacity(m);
        for _ in 0..m {
            vertices.push([r.f64()?, r.f64()?]);
        }
        footprints.push(Footprint { vertices });
    }

    let mut facades = Vec::new();
    for _ in 0..r.count("facade", 8)? {
        let footprint_index = r.u32()?;
        let mut cells_patterns = Vec::new();
        for _ in 0..r.count("pattern", 12)? {
            let segment_range = (r.u32()?, r.u32()?);
            let mut cells = Vec::new();
            for _ in 0..r.count("cell", 13)? {
                let cell_type = r.u32()?;
                let offset = r.f64()?;
                let modifier = match r.u8()? {
                    0 => None,
                    1 => Some(CellModifier {
                        scale_x: r.f64()?,
                        scale_y: r.f64()?,
                        quaternion_3: r.f64()?,
                        quaternion_4: r.f64()?,
                    }),
                    flag => return Err(DatasetError::Format(format!("modifier flag {flag}"))),
                };
                cells.push(Cell { cell_type, offset, modifier });
            }
            cells_patterns.push(CellsPattern { segment_range, cells });
        }
        facades.push(Facade { footprint_index, cells_patterns });
    }

    let mut storeys = Vec::new();
    for _ in 0..r.count("storey", 12)? {
        storeys.push(Storey { elevation: r.f64()?, facade_index: r.u32()? });
    }

    let mut material_variations = Vec::new();
    for _ in 0..r.count("variation", 32)? {
        let cell_type = r.u32()?;
        let material_slot = r.u32()?;
        let color = [r.f64()?, r.f64()?, r.f64()?];
        material_variations.push(MaterialVariation { cell_type, material_slot, color });
    }

    let mut rest = Vec::new();
    r.cur.read_to_end(&mut rest).expect("reading from a slice");
    if !rest.is_empty() {
        return Err(DatasetError::Format(format!("{} trailing bytes after building", rest.len())));
    }
    Ok(BuildingAbstraction { height, footprints, facades, storeys, material_variations, noise_level })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{build_catalog, sample, PriorConfig};
    use crate::schema::fixtures::{box_building, triangle_building};
    use proptest::prelude::*;

    #[test]
    fn fixtures_round_trip() {
        for b in [box_building(10.0, 6.0, 3), triangle_building()] {
            assert_eq!(building_from_bytes(&building_to_bytes(&b)).unwrap(), b);
        }
    }

    #[test]
    fn modifiers_survive() {
        let mut b = box_building(10.0, 6.0, 1);
        b.facades[0].cells_patterns[0].cells[0].modifier =
            Some(CellModifier { scale_x: 1.5, scale_y: 0.5, quaternion_3: 0.25, quaternion_4: -0.75 });
        assert_eq!(building_from_bytes(&building_to_bytes(&b)).unwrap(), b);
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let bytes = building_to_bytes(&box_building(10.0, 6.0, 2));
        for cut in [0, 1, 2, 10, bytes.len() - 1] {
            assert!(building_from_bytes(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(building_from_bytes(&longer).is_err());
    }

    #[test]
    fn rejects_absurd_counts() {
        let mut bytes = building_to_bytes(&box_building(10.0, 6.0, 1));
        // footprint count sits right after version, height and noise level
        bytes[18..22].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(building_from_bytes(&bytes), Err(DatasetError::Format(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn prior_samples_round_trip(seed in any::<u64>()) {
            let cat = build_catalog(0, 64).unwrap();
            let b = sample(seed, &PriorConfig::default(), &cat);
            prop_assert_eq!(building_from_bytes(&building_to_bytes(&b)).unwrap(), b);
        }
    }
}
