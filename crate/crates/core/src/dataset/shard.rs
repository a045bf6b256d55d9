//! Append-only shard files.
//!
//! ```text
//! header   "PISHARD\0"  u32 version  u32 shard_index
//! record*  u32 len  payload[len]  u32 crc32(payload)
//! footer   count × (u64 id, u64 offset, u32 len)
//! trailer  u32 count  u64 footer_offset  "PIFOOTER"
//! ```
//!
//! A record payload is `u64 id` followed by four length-prefixed (u32)
//! sections: building binary, token bytes, PLY bytes, metadata JSON.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian, ReadBytesExt, WriteBytesExt};

use super::DatasetError;

pub const SHARD_MAGIC: &[u8; 8] = b"PISHARD\0";
pub const FOOTER_MAGIC: &[u8; 8] = b"PIFOOTER";
pub const SHARD_VERSION: u32 = 1;
pub const HEADER_LEN: u64 = 16;
const TRAILER_LEN: u64 = 20;
const INDEX_ENTRY_LEN: u64 = 20;
/// Upper bound on a single record payload.
pub const MAX_RECORD_LEN: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexEntry {
    pub id: u64,
    /// File offset of the record's length prefix.
    pub offset: u64,
    pub len: u32,
}

/// Sections of one record payload, still encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordPayload {
    pub id: u64,
    pub building: Vec<u8>,
    pub tokens: Vec<u8>,
    pub ply: Vec<u8>,
    pub metadata: Vec<u8>,
}

impl RecordPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let sections = [&self.building, &self.tokens, &self.ply, &self.metadata];
        let mut out = Vec::with_capacity(8 + sections.iter().map(|s| 4 + s.len()).sum::<usize>());
        out.write_u64::<LittleEndian>(self.id).unwrap();
        for s in sections {
            out.write_u32::<LittleEndian>(s.len() as u32).unwrap();
            out.extend_from_slice(s);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DatasetError> {
        let short = || DatasetError::Format("record payload truncated".into());
        if bytes.len() < 8 {
            return Err(short());
        }
        let id = LittleEndian::read_u64(bytes);
        let mut rest = &bytes[8..];
        let mut take = || -> Result<Vec<u8>, DatasetError> {
            if rest.len() < 4 {
                return Err(short());
            }
            let n = LittleEndian::read_u32(rest) as usize;
            if rest.len() - 4 < n {
                return Err(short());
            }
            let s = rest[4..4 + n].to_vec();
            rest = &rest[4 + n..];
            Ok(s)
        };
        let (building, tokens, ply, metadata) = (take()?, take()?, take()?, take()?);
        if !rest.is_empty() {
            return Err(DatasetError::Format(format!("{} trailing bytes in record {id}", rest.len())));
        }
        Ok(RecordPayload { id, building, tokens, ply, metadata })
    }
}

/// Frames a payload as `len | payload | crc32`.
pub fn frame(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + 8);
    out.write_u32::<LittleEndian>(payload.len() as u32).unwrap();
    out.extend_from_slice(payload);
    out.write_u32::<LittleEndian>(crc32fast::hash(payload)).unwrap();
    out
}

/// Parses one frame from the front of `bytes`, returning the payload and the
/// frame's total length.
pub fn unframe(bytes: &[u8]) -> Result<(&[u8], usize), DatasetError> {
    if bytes.len() < 4 {
        return Err(DatasetError::Format("frame length truncated".into()));
    }
    let len = LittleEndian::read_u32(bytes);
    if len > MAX_RECORD_LEN {
        return Err(DatasetError::Format(format!("frame length {len} exceeds {MAX_RECORD_LEN}")));
    }
    let end = 4 + len as usize;
    if bytes.len() < end + 4 {
        return Err(DatasetError::Format("frame truncated".into()));
    }
    let payload = &bytes[4..end];
    let stored = LittleEndian::read_u32(&bytes[end..]);
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(DatasetError::Format(format!("crc mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    Ok((payload, end + 4))
}

fn header(shard_index: u32) -> [u8; HEADER_LEN as usize] {
    let mut h = [0u8; HEADER_LEN as usize];
    h[..8].copy_from_slice(SHARD_MAGIC);
    LittleEndian::write_u32(&mut h[8..12], SHARD_VERSION);
    LittleEndian::write_u32(&mut h[12..16], shard_index);
    h
}

pub fn check_header(bytes: &[u8], shard_index: u32) -> Result<(), DatasetError> {
    if bytes.len() < HEADER_LEN as usize || &bytes[..8] != SHARD_MAGIC {
        return Err(DatasetError::Format("missing shard magic".into()));
    }
    let version = LittleEndian::read_u32(&bytes[8..12]);
    if version != SHARD_VERSION {
        return Err(DatasetError::Format(format!("shard version {version}, expected {SHARD_VERSION}")));
    }
    let index = LittleEndian::read_u32(&bytes[12..16]);
    if index != shard_index {
        return Err(DatasetError::Format(format!("shard index {index}, expected {shard_index}")));
    }
    Ok(())
}

pub fn encode_footer(entries: &[IndexEntry], footer_offset: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(entries.len() * INDEX_ENTRY_LEN as usize + TRAILER_LEN as usize);
    for e in entries {
        out.write_u64::<LittleEndian>(e.id).unwrap();
        out.write_u64::<LittleEndian>(e.offset).unwrap();
        out.write_u32::<LittleEndian>(e.len).unwrap();
    }
    out.write_u32::<LittleEndian>(entries.len() as u32).unwrap();
    out.write_u64::<LittleEndian>(footer_offset).unwrap();
    out.extend_from_slice(FOOTER_MAGIC);
    out
}

/// Reads the footer index from the tail of a complete shard image.
pub fn decode_footer(bytes: &[u8]) -> Result<Vec<IndexEntry>, DatasetError> {
    let n = bytes.len() as u64;
    if n < HEADER_LEN + TRAILER_LEN || &bytes[bytes.len() - 8..] != FOOTER_MAGIC {
        return Err(DatasetError::Format("missing footer".into()));
    }
    let footer_offset = LittleEndian::read_u64(&bytes[(n - 16) as usize..]);
    if footer_offset < HEADER_LEN || footer_offset > n - TRAILER_LEN {
        return Err(DatasetError::Format(format!("footer offset {footer_offset} out of range")));
    }
    decode_footer_at(&bytes[footer_offset as usize..], footer_offset)
}

/// Serial sink for one shard. Records are appended in id order; `finish`
/// writes the footer.
pub struct ShardWriter {
    path: PathBuf,
    out: BufWriter<File>,
    offset: u64,
    entries: Vec<IndexEntry>,
}

impl ShardWriter {
    pub fn create(path: &Path, shard_index: u32) -> Result<Self, DatasetError> {
        let io = |e| DatasetError::Io { path: path.to_path_buf(), source: e };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        out.write_all(&header(shard_index)).map_err(io)?;
        Ok(ShardWriter { path: path.to_path_buf(), out, offset: HEADER_LEN, entries: Vec::new() })
    }

    /// Reopens a partially written shard, keeping the longest prefix of
    /// intact records whose ids run consecutively from `first_id`. The file is
    /// truncated after that prefix.
    pub fn resume(path: &Path, shard_index: u32, first_id: u64) -> Result<Self, DatasetError> {
        let io = |e| DatasetError::Io { path: path.to_path_buf(), source: e };
        let bytes = std::fs::read(path).map_err(io)?;
        if check_header(&bytes, shard_index).is_err() {
            return Self::create(path, shard_index);
        }
        let mut offset = HEADER_LEN;
        let mut entries = Vec::new();
        while let Ok((payload, used)) = unframe(&bytes[offset as usize..]) {
            let expected = first_id + entries.len() as u64;
            if payload.len() < 8 || LittleEndian::read_u64(payload) != expected {
                break;
            }
            entries.push(IndexEntry { id: expected, offset, len: payload.len() as u32 });
            offset += used as u64;
        }
        let file = OpenOptions::new().write(true).open(path).map_err(io)?;
        file.set_len(offset).map_err(io)?;
        let mut out = BufWriter::new(file);
        out.seek(SeekFrom::Start(offset)).map_err(io)?;
        Ok(ShardWriter { path: path.to_path_buf(), out, offset, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn append(&mut self, id: u64, payload: &[u8]) -> Result<(), DatasetError> {
        let framed = frame(payload);
        self.out.write_all(&framed).map_err(|source| DatasetError::Write { record: id, source })?;
        self.entries.push(IndexEntry { id, offset: self.offset, len: payload.len() as u32 });
        self.offset += framed.len() as u64;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), DatasetError> {
        self.out.flush().map_err(|e| DatasetError::Io { path: self.path.clone(), source: e })
    }

    pub fn finish(mut self) -> Result<Vec<IndexEntry>, DatasetError> {
        let io = |e| DatasetError::Io { path: self.path.clone(), source: e };
        let footer = encode_footer(&self.entries, self.offset);
        self.out.write_all(&footer).map_err(io)?;
        self.out.flush().map_err(io)?;
        Ok(self.entries)
    }
}

/// Random access to the records of a finished shard.
pub struct ShardReader {
    path: PathBuf,
    file: File,
    entries: Vec<IndexEntry>,
}

impl ShardReader {
    pub fn open(path: &Path, shard_index: u32) -> Result<Self, DatasetError> {
        let io = |e| DatasetError::Io { path: path.to_path_buf(), source: e };
        let mut file = File::open(path).map_err(io)?;
        let mut head = [0u8; HEADER_LEN as usize];
        file.read_exact(&mut head).map_err(io)?;
        check_header(&head, shard_index)?;
        let size = file.seek(SeekFrom::End(0)).map_err(io)?;
        if size < HEADER_LEN + TRAILER_LEN {
            return Err(DatasetError::Format("missing footer".into()));
        }
        let mut trailer = [0u8; TRAILER_LEN as usize];
        file.seek(SeekFrom::End(-(TRAILER_LEN as i64))).map_err(io)?;
        file.read_exact(&mut trailer).map_err(io)?;
        if &trailer[12..] != FOOTER_MAGIC {
            return Err(DatasetError::Format("missing footer".into()));
        }
        let footer_offset = LittleEndian::read_u64(&trailer[4..]);
        if footer_offset < HEADER_LEN || footer_offset > size - TRAILER_LEN {
            return Err(DatasetError::Format(format!("footer offset {footer_offset} out of range")));
        }
        let mut tail = vec![0u8; (size - footer_offset) as usize];
        file.seek(SeekFrom::Start(footer_offset)).map_err(io)?;
        file.read_exact(&mut tail).map_err(io)?;
        let entries = decode_footer_at(&tail, footer_offset)?;
        Ok(ShardReader { path: path.to_path_buf(), file, entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn read(&mut self, entry: &IndexEntry) -> Result<RecordPayload, DatasetError> {
        let io = |e| DatasetError::Io { path: self.path.clone(), source: e };
        let mut buf = vec![0u8; entry.len as usize + 8];
        self.file.seek(SeekFrom::Start(entry.offset)).map_err(io)?;
        self.file.read_exact(&mut buf).map_err(io)?;
        let corrupt = |reason: String| DatasetError::Corrupt { record: entry.id, reason };
        let (payload, _) = unframe(&buf).map_err(|e| corrupt(e.to_string()))?;
        let record = RecordPayload::from_bytes(payload).map_err(|e| corrupt(e.to_string()))?;
        if record.id != entry.id {
            return Err(corrupt(format!("payload carries id {}", record.id)));
        }
        Ok(record)
    }
}

/// Footer decoding for a tail slice that starts at `footer_offset`.
fn decode_footer_at(tail: &[u8], footer_offset: u64) -> Result<Vec<IndexEntry>, DatasetError> {
    let n = tail.len() as u64;
    if n < TRAILER_LEN {
        return Err(DatasetError::Format("missing footer".into()));
    }
    let trailer = &tail[(n - TRAILER_LEN) as usize..];
    let count = LittleEndian::read_u32(trailer) as u64;
    if count * INDEX_ENTRY_LEN != n - TRAILER_LEN {
        return Err(DatasetError::Format(format!("footer of {count} entries does not fit")));
    }
    let mut cur = &tail[..(n - TRAILER_LEN) as usize];
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let e = IndexEntry {
            id: cur.read_u64::<LittleEndian>().unwrap(),
            offset: cur.read_u64::<LittleEndian>().unwrap(),
            len: cur.read_u32::<LittleEndian>().unwrap(),
        };
        if e.offset < HEADER_LEN || e.offset.saturating_add(8 + e.len as u64) > footer_offset {
            return Err(DatasetError::Format(format!("index entry for record {} points outside the record area", e.id)));
        }
        entries.push(e);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(id: u64) -> RecordPayload {
        RecordPayload { id, building: vec![1, 2, 3], tokens: vec![id as u8; 8], ply: b"ply".to_vec(), metadata: b"{}".to_vec() }
    }

    fn write(path: &Path, n: u64) -> Vec<IndexEntry> {
        let mut w = ShardWriter::create(path, 3).unwrap();
        for id in 0..n {
            w.append(id + 100, &payload(id + 100).to_bytes()).unwrap();
        }
        w.finish().unwrap()
    }

    #[test]
    fn payload_round_trip() {
        let p = payload(42);
        assert_eq!(RecordPayload::from_bytes(&p.to_bytes()).unwrap(), p);
        let bytes = p.to_bytes();
        assert!(RecordPayload::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let entries = write(&path, 5);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(decode_footer(&bytes).unwrap(), entries);
        let mut r = ShardReader::open(&path, 3).unwrap();
        assert_eq!(r.entries(), &entries[..]);
        for e in entries {
            assert_eq!(r.read(&e).unwrap(), payload(e.id));
        }
        assert!(ShardReader::open(&path, 4).is_err());
    }

    #[test]
    fn corruption_is_reported_with_record_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let entries = write(&path, 3);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[entries[1].offset as usize + 14] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        let mut r = ShardReader::open(&path, 3).unwrap();
        assert!(r.read(&entries[0]).is_ok());
        match r.read(&entries[1]) {
            Err(DatasetError::Corrupt { record, .. }) => assert_eq!(record, 101),
            other => panic!("{other:?}"),
        }
        assert!(r.read(&entries[2]).is_ok());
    }

    #[test]
    fn resume_keeps_intact_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.bin");
        write(&full, 4);
        let reference = std::fs::read(&full).unwrap();

        let partial = dir.path().join("partial.bin");
        let entries = decode_footer(&reference).unwrap();
        // Cut in the middle of the third record.
        std::fs::write(&partial, &reference[..entries[2].offset as usize + 7]).unwrap();
        let mut w = ShardWriter::resume(&partial, 3, 100).unwrap();
        assert_eq!(w.len(), 2);
        for id in 102..104 {
            w.append(id, &payload(id).to_bytes()).unwrap();
        }
        w.finish().unwrap();
        assert_eq!(std::fs::read(&partial).unwrap(), reference);
    }

    #[test]
    fn unframe_rejects_garbage() {
        assert!(unframe(&[]).is_err());
        assert!(unframe(&[255, 255, 255, 255]).is_err());
        let mut f = frame(b"hello");
        assert_eq!(unframe(&f).unwrap(), (&b"hello"[..], f.len()));
        f[5] ^= 1;
        assert!(unframe(&f).is_err());
    }
}
