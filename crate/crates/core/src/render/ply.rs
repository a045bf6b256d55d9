use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use super::PointCloud;
use crate::geometry::P3;

#[derive(Debug, Error, PartialEq)]
pub enum PlyError {
    #[error("missing or malformed header: {0}")]
    Header(String),
    #[error("unsupported layout: {0}")]
    Unsupported(String),
    #[error("body holds {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
}

const PROPERTIES: [&str; 6] = [
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
];
const STRIDE: usize = 15;

/// Binary little-endian PLY with float32 positions and uchar RGB.
pub fn write_ply(pc: &PointCloud) -> Vec<u8> {
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", pc.len());
    for p in PROPERTIES {
        header.push_str(p);
        header.push('\n');
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    let mut rec = [0u8; STRIDE];
    for (p, c) in pc.positions.iter().zip(&pc.colors) {
        LittleEndian::write_f32(&mut rec[0..4], p.x as f32);
        LittleEndian::write_f32(&mut rec[4..8], p.y as f32);
        LittleEndian::write_f32(&mut rec[8..12], p.z as f32);
        for k in 0..3 {
            rec[12 + k] = (c[k].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        out.extend_from_slice(&rec);
    }
    out
}

/// Reads exactly the layout [`write_ply`] produces (comments allowed).
pub fn read_ply(bytes: &[u8]) -> Result<PointCloud, PlyError> {
    const END: &[u8] = b"end_header\n";
    let end = bytes.windows(END.len()).position(|w| w == END).ok_or_else(|| PlyError::Header("no end_header line".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| PlyError::Header("header is not UTF-8".into()))?;
    let mut lines = header.lines().map(str::trim).filter(|l| !l.starts_with("comment") && !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(PlyError::Header("missing magic".into()));
    }
    match lines.next() {
        Some("format binary_little_endian 1.0") => {}
        Some(other) => return Err(PlyError::Unsupported(other.to_string())),
        None => return Err(PlyError::Header("missing format line".into())),
    }
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| PlyError::Header("missing vertex element".into()))?;
    for expected in PROPERTIES {
        match lines.next() {
            Some(l) if l == expected => {}
            Some(l) => return Err(PlyError::Unsupported(l.to_string())),
            None => return Err(PlyError::Header(format!("missing '{expected}'"))),
        }
    }
    if let Some(extra) = lines.next() {
        return Err(PlyError::Unsupported(extra.to_string()));
    }
    let body = &bytes[end + END.len()..];
    let expected = count.checked_mul(STRIDE).ok_or_else(|| PlyError::Header("vertex count overflows".into()))?;
    if body.len() != expected {
        return Err(PlyError::Truncated { got: body.len(), expected });
    }
    let mut pc = PointCloud { positions: Vec::with_capacity(count), colors: Vec::with_capacity(count) };
    for rec in body.chunks_exact(STRIDE) {
        let p = P3::new(
            LittleEndian::read_f32(&rec[0..4]) as f64,
            LittleEndian::read_f32(&rec[4..8]) as f64,
            LittleEndian::read_f32(&rec[8..12]) as f64,
        );
        pc.push(p, [0, 1, 2].map(|k| rec[12 + k] as f64 / 255.0));
    }
    Ok(pc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut pc = PointCloud::default();
        pc.push(P3::new(1.5, -2.25, 3.0), [1.0, 0.0, 0.2]);
        pc.push(P3::new(0.0, 0.0, 100.125), [0.5, 0.5, 0.5]);
        let bytes = write_ply(&pc);
        assert!(bytes.starts_with(b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n"));
        let back = read_ply(&bytes).unwrap();
        assert_eq!(back.positions, pc.positions);
        assert_eq!(back.colors[0], [1.0, 0.0, 51.0 / 255.0]);
        assert_eq!(write_ply(&back), bytes);
    }

    #[test]
    fn rejects_bad_input() {
        let pc = PointCloud { positions: vec![P3::origin()], colors: vec![[0.0; 3]] };
        let bytes = write_ply(&pc);
        assert!(matches!(read_ply(&bytes[..bytes.len() - 1]), Err(PlyError::Truncated { .. })));
        assert!(read_ply(b"garbage").is_err());
        let ascii = String::from_utf8_lossy(&bytes).replace("binary_little_endian", "ascii").into_bytes();
        assert!(matches!(read_ply(&ascii), Err(PlyError::Unsupported(_))));
    }
}
