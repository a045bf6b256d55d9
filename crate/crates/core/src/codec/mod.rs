//! Bijective token codec for building abstractions.
//!
//! Encoding is a depth-first walk in schema field order. Values become tokens
//! of their group; list items are introduced by `ITEM` and lists closed by
//! `END_REPEATED`; optional fields are `PRESENT` + payload or `ABSENT`. The
//! [`Grammar`] automaton recognizes exactly the sequences the encoder can
//! produce for canonical buildings (plus those whose only defects are
//! geometric, like self-intersecting footprints), so masking a model's output
//! with [`Grammar::valid_next`] always yields a decodable building.

mod grammar;
mod mask;
mod tree;
mod vocab;

pub use grammar::{Expectation, Grammar, GrammarState, StepError};
pub use mask::TokenMask;
pub use vocab::{
    schema_version_hash, Control, GroupKind, ManifestError, TokenGroup, VocabConfig, VocabManifest, Vocabulary,
    DEFAULT_POINTER_CARDINALITY,
};

use byteorder::{ByteOrder, LittleEndian};
use thiserror::Error;

use crate::schema::BuildingAbstraction;

/// Longest token sequence accepted anywhere in the pipeline.
pub const MAX_SEQUENCE_LENGTH: usize = 2048;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSequence(pub Vec<u32>);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("{what}: {count} exceeds capacity {limit}")]
    Capacity { what: String, count: usize, limit: u32 },
    #[error("{path}: asset {cell_type} outside catalog of {catalog_size}")]
    AssetOutOfRange { path: String, cell_type: usize, catalog_size: u32 },
    #[error("building is not canonical: token {position} rejected at {field}")]
    NotCanonical { position: usize, field: String },
    #[error("token {token} at position {position} is not valid; {} tokens were", expected.count())]
    Parse { position: usize, token: u32, expected: Box<TokenMask> },
    #[error("sequence ends after {consumed} tokens while expecting {field}")]
    Incomplete { consumed: usize, field: String, state: Box<GrammarState> },
    #[error("malformed token sequence bytes: {0}")]
    Format(String),
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `u32` count followed by `u32` ids, little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![0u8; 4 + 4 * self.0.len()];
        LittleEndian::write_u32(&mut out[..4], self.0.len() as u32);
        LittleEndian::write_u32_into(&self.0, &mut out[4..]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < 4 {
            return Err(CodecError::Format("missing length prefix".into()));
        }
        let n = LittleEndian::read_u32(&bytes[..4]) as usize;
        let body = &bytes[4..];
        if body.len() != n.checked_mul(4).ok_or_else(|| CodecError::Format("length overflow".into()))? {
            return Err(CodecError::Format(format!("prefix declares {n} ids but {} bytes follow", body.len())));
        }
        let mut ids = vec![0u32; n];
        LittleEndian::read_u32_into(body, &mut ids);
        Ok(TokenSequence(ids))
    }
}

/// Vocabulary plus automaton; the entry point for encoding and decoding.
#[derive(Debug, Clone)]
pub struct Codec {
    grammar: Grammar,
}

impl Codec {
    pub fn new(vocab: Vocabulary) -> Self {
        Codec { grammar: Grammar::new(vocab) }
    }

    pub fn for_catalog(catalog_size: usize) -> Self {
        Self::new(Vocabulary::for_catalog(catalog_size))
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.grammar.vocab()
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    /// Encodes a canonical building. Values are quantized on the way; the
    /// sequence is checked against the automaton so that only sequences
    /// [`Codec::decode`] accepts are ever produced.
    pub fn encode(&self, b: &BuildingAbstraction) -> Result<TokenSequence, CodecError> {
        let g = &self.grammar;
        let tree = tree::building_to_tree(b, g.vocab())?;
        let mut ids = Vec::new();
        tree::emit(g.schema(), g.schema().root(), &tree, g.vocab(), &mut ids);
        let mut s = g.start();
        for (position, &id) in ids.iter().enumerate() {
            if g.advance(&mut s, id).is_err() {
                return Err(CodecError::NotCanonical { position, field: g.describe(&s) });
            }
        }
        debug_assert!(s.is_accept());
        Ok(TokenSequence(ids))
    }

    /// Parses a token sequence; the inverse of [`Codec::encode`] on its image.
    pub fn decode(&self, t: &TokenSequence) -> Result<BuildingAbstraction, CodecError> {
        let g = &self.grammar;
        let mut s = g.start();
        for (position, &token) in t.0.iter().enumerate() {
            if g.advance(&mut s, token).is_err() {
                return Err(CodecError::Parse { position, token, expected: Box::new(g.valid_next(&s)) });
            }
        }
        if !s.is_accept() {
            return Err(CodecError::Incomplete { consumed: t.len(), field: g.describe(&s), state: Box::new(s) });
        }
        let mut pos = 0;
        let tree = tree::parse(g.schema(), g.schema().root(), &t.0, &mut pos, g.vocab());
        Ok(tree::tree_to_building(&tree, g.vocab()))
    }

    /// The building every continuous field snapped to its token grid; what
    /// `decode(encode(b))` returns for a canonical `b`.
    pub fn quantize_building(&self, b: &BuildingAbstraction) -> Result<BuildingAbstraction, CodecError> {
        let tree = tree::building_to_tree(b, self.vocab())?;
        Ok(tree::tree_to_building(&tree, self.vocab()))
    }

    pub fn valid_next(&self, s: &GrammarState) -> TokenMask {
        self.grammar.valid_next(s)
    }

    pub fn step(&self, s: &GrammarState, id: u32) -> Result<GrammarState, StepError> {
        self.grammar.step(s, id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::fixtures::*;
    use crate::schema::*;

    fn codec() -> Codec {
        Codec::for_catalog(64)
    }

    #[test]
    fn minimal_building_hand_trace() {
        let c = codec();
        let v = c.vocab();
        let b = triangle_building();
        let t = c.encode(&b).unwrap();
        let item = v.control(Control::Item);
        let end = v.control(Control::EndRepeated);
        let absent = v.control(Control::Absent);
        let abs = |x: f64| v.quantize(x, GroupKind::AbsoluteCoord);
        let ptr = |i: u32| v.token(GroupKind::PointerIndex, i);
        let expected = vec![
            v.quantize(0.0, GroupKind::NoiseLevel),
            abs(3.0),
            // footprints: one footprint of three vertices
            item,
            item,
            abs(0.0),
            abs(0.0),
            item,
            abs(10.0),
            abs(0.0),
            item,
            abs(0.0),
            abs(10.0),
            end,
            end,
            // facades: one facade, one pattern on segment 0, one cell
            item,
            ptr(0),
            item,
            ptr(0),
            ptr(0),
            item,
            v.token(GroupKind::AssetIndex, 0),
            v.token(GroupKind::RelativeCoord, 0),
            absent,
            end,
            end,
            end,
            // storeys: one at elevation 0 linking facade 0
            item,
            v.token(GroupKind::RelativeCoord, 0),
            ptr(0),
            end,
            // no material variations
            end,
        ];
        assert_eq!(t.0, expected);
        let controls: Vec<Control> = t.0.iter().filter_map(|&id| v.as_control(id)).collect();
        use Control::*;
        assert_eq!(
            controls,
            vec![
                Item,
                Item,
                Item,
                Item,
                EndRepeated,
                EndRepeated,
                Item,
                Item,
                Item,
                Absent,
                EndRepeated,
                EndRepeated,
                EndRepeated,
                Item,
                EndRepeated,
                EndRepeated
            ]
        );
        assert_eq!(c.decode(&t).unwrap(), b);
    }

    #[test]
    fn empty_sequence_is_incomplete() {
        let err = codec().decode(&TokenSequence::default()).unwrap_err();
        assert!(matches!(err, CodecError::Incomplete { consumed: 0, .. }));
    }

    #[test]
    fn group_mismatch_is_a_parse_error_at_its_position() {
        let c = codec();
        let mut t = c.encode(&triangle_building()).unwrap();
        // Position 20 is the cell's asset index; put a relative coordinate there.
        assert_eq!(c.vocab().classify(t.0[20]).unwrap().0, GroupKind::AssetIndex);
        t.0[20] = c.vocab().token(GroupKind::RelativeCoord, 3);
        match c.decode(&t) {
            Err(CodecError::Parse { position, expected, .. }) => {
                assert_eq!(position, 20);
                assert_eq!(expected.count(), 64);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trailing_tokens_rejected() {
        let c = codec();
        let mut t = c.encode(&triangle_building()).unwrap();
        t.0.push(t.0[0]);
        assert!(matches!(c.decode(&t), Err(CodecError::Parse { .. })));
    }

    #[test]
    fn non_canonical_order_is_refused() {
        let c = codec();
        let mut b = box_building(10.0, 6.0, 3);
        b.storeys.swap(0, 2);
        assert!(matches!(c.encode(&b), Err(CodecError::NotCanonical { .. })));
        assert!(c.encode(&canonicalize(&b)).is_ok());
    }

    #[test]
    fn capacity_errors() {
        let c = Codec::new(Vocabulary::new(VocabConfig { catalog_size: 8, pointer_cardinality: 2 }));
        let mut b = triangle_building();
        b.material_variations.push(MaterialVariation { cell_type: 0, material_slot: 2, color: [0.0; 3] });
        assert!(matches!(c.encode(&b), Err(CodecError::Capacity { .. })));
        let b = triangle_building();
        // Three vertices with only two addressable segments.
        assert!(matches!(c.encode(&b), Err(CodecError::Capacity { .. })));
    }

    #[test]
    fn elevation_is_relative_to_height() {
        let c = codec();
        let b = box_building(10.0, 6.0, 4);
        let q = c.quantize_building(&b).unwrap();
        for (s, qs) in b.storeys.iter().zip(&q.storeys) {
            assert!((s.elevation - qs.elevation).abs() <= 12.0 * 0.0025 + 1e-9);
        }
        assert_eq!(c.decode(&c.encode(&b).unwrap()).unwrap(), q);
    }

    #[test]
    fn modifier_round_trip() {
        let c = codec();
        let mut b = triangle_building();
        b.facades[0].cells_patterns[0].cells[0].modifier =
            Some(CellModifier { scale_x: 1.234, scale_y: -2.0, quaternion_3: 0.0, quaternion_4: 0.7123 });
        let q = c.quantize_building(&b).unwrap();
        let m = q.facades[0].cells_patterns[0].cells[0].modifier.unwrap();
        assert!((m.scale_x - 1.23).abs() < 1e-9 && (m.quaternion_4 - 0.71).abs() < 1e-9);
        let t = c.encode(&b).unwrap();
        assert_eq!(c.decode(&t).unwrap(), q);
        assert_eq!(c.encode(&q).unwrap(), t);
    }

    #[test]
    fn token_bytes_round_trip_and_errors() {
        let t = TokenSequence(vec![1, 2, 3000, u32::MAX]);
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..4], &[4, 0, 0, 0]);
        assert_eq!(TokenSequence::from_bytes(&bytes).unwrap(), t);
        assert!(TokenSequence::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(TokenSequence::from_bytes(&[1, 0]).is_err());
    }

    #[test]
    fn encoded_prefixes_are_always_in_the_mask() {
        let c = codec();
        let mut b = box_building(10.0, 6.0, 3);
        b.material_variations = vec![
            MaterialVariation { cell_type: 0, material_slot: 0, color: [0.1, 0.2, 0.3] },
            MaterialVariation { cell_type: 0, material_slot: 63, color: [0.1, 0.2, 0.3] },
            MaterialVariation { cell_type: 1, material_slot: 0, color: [0.4, 0.5, 0.6] },
        ];
        let t = c.encode(&b).unwrap();
        let g = c.grammar();
        let mut s = g.start();
        for &id in &t.0 {
            assert!(g.valid_next(&s).contains(id));
            s = g.step(&s, id).unwrap();
        }
        assert!(s.is_accept());
        assert!(g.valid_next(&s).is_empty());
    }
}
