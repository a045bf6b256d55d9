//! Incremental parser for building token sequences.
//!
//! The schema is a small tree of message, repeated, optional and value nodes.
//! A [`GrammarState`] is a stack of frames into that tree plus a handful of
//! context registers that carry the cross-field constraints (pointer ranges,
//! monotone offsets, disjoint segment ranges, ordered variation keys). Every
//! state the automaton settles in consumes exactly one token, and every token
//! in [`Grammar::valid_next`] can be extended to an accepted sequence.

use thiserror::Error;

use super::mask::TokenMask;
use super::vocab::{Control, GroupKind, Vocabulary};

pub(crate) type NodeId = u16;

/// Per-value constraints, evaluated against the context registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ValueRule {
    Any,
    /// Strictly above the grid point of zero.
    Positive,
    NondecreasingOffset,
    NondecreasingElevation,
    FootprintPointer,
    FacadePointer,
    SegmentFirst,
    SegmentLast,
    QuatFirst,
    /// Excludes zero when the preceding component was zero.
    QuatSecond,
    VariationAsset,
    VariationSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ListRule {
    // Toy schemas in tests only.
    #[cfg_attr(not(test), allow(dead_code))]
    Plain,
    Footprints,
    Vertices,
    Facades,
    Patterns,
    Cells,
    Storeys,
    Variations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cap {
    Unbounded,
    #[cfg_attr(not(test), allow(dead_code))]
    Fixed(u32),
    /// Bounded by the pointer group so every item stays addressable.
    Pointer,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Value { name: &'static str, group: GroupKind, rule: ValueRule },
    Message { name: &'static str, fields: Vec<NodeId> },
    Repeated { name: &'static str, item: NodeId, min: u32, cap: Cap, rule: ListRule },
    Optional { name: &'static str, item: NodeId },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct Schema {
    nodes: Vec<Node>,
    root: NodeId,
}

impl Schema {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    fn push(&mut self, n: Node) -> NodeId {
        self.nodes.push(n);
        (self.nodes.len() - 1) as NodeId
    }

    pub fn value(&mut self, name: &'static str, group: GroupKind, rule: ValueRule) -> NodeId {
        self.push(Node::Value { name, group, rule })
    }

    pub fn message(&mut self, name: &'static str, fields: Vec<NodeId>) -> NodeId {
        self.push(Node::Message { name, fields })
    }

    pub fn repeated(&mut self, name: &'static str, item: NodeId, min: u32, cap: Cap, rule: ListRule) -> NodeId {
        self.push(Node::Repeated { name, item, min, cap, rule })
    }

    pub fn optional(&mut self, name: &'static str, item: NodeId) -> NodeId {
        self.push(Node::Optional { name, item })
    }

    pub fn with_root(mut self, root: NodeId) -> Self {
        self.root = root;
        self
    }

    /// The building layout. Field order here is the token order.
    pub fn building() -> Schema {
        use GroupKind::*;
        let mut s = Schema::default();

        let x = s.value("x", AbsoluteCoord, ValueRule::Any);
        let y = s.value("y", AbsoluteCoord, ValueRule::Any);
        let vertex = s.message("vertex", vec![x, y]);
        let vertices = s.repeated("vertices", vertex, 3, Cap::Pointer, ListRule::Vertices);
        let footprint = s.message("footprint", vec![vertices]);
        let footprints = s.repeated("footprints", footprint, 1, Cap::Pointer, ListRule::Footprints);

        let sx = s.value("scale_x", ScaleRotation, ValueRule::Any);
        let sy = s.value("scale_y", ScaleRotation, ValueRule::Any);
        let q3 = s.value("quaternion_3", ScaleRotation, ValueRule::QuatFirst);
        let q4 = s.value("quaternion_4", ScaleRotation, ValueRule::QuatSecond);
        let modifier_msg = s.message("cell_modifier", vec![sx, sy, q3, q4]);
        let modifier = s.optional("modifier", modifier_msg);
        let cell_type = s.value("cell_type", AssetIndex, ValueRule::Any);
        let offset = s.value("offset", RelativeCoord, ValueRule::NondecreasingOffset);
        let cell = s.message("cell", vec![cell_type, offset, modifier]);
        let cells = s.repeated("cells", cell, 1, Cap::Unbounded, ListRule::Cells);
        let first = s.value("segment_first", PointerIndex, ValueRule::SegmentFirst);
        let last = s.value("segment_last", PointerIndex, ValueRule::SegmentLast);
        let pattern = s.message("cells_pattern", vec![first, last, cells]);
        let patterns = s.repeated("cells_patterns", pattern, 1, Cap::Unbounded, ListRule::Patterns);
        let footprint_index = s.value("footprint_index", PointerIndex, ValueRule::FootprintPointer);
        let facade = s.message("facade", vec![footprint_index, patterns]);
        let facades = s.repeated("facades", facade, 1, Cap::Pointer, ListRule::Facades);

        let elevation = s.value("elevation", RelativeCoord, ValueRule::NondecreasingElevation);
        let facade_index = s.value("facade_index", PointerIndex, ValueRule::FacadePointer);
        let storey = s.message("storey", vec![elevation, facade_index]);
        let storeys = s.repeated("storeys", storey, 1, Cap::Unbounded, ListRule::Storeys);

        let v_type = s.value("cell_type", AssetIndex, ValueRule::VariationAsset);
        let v_slot = s.value("material_slot", PointerIndex, ValueRule::VariationSlot);
        let h = s.value("h", RelativeCoord, ValueRule::Any);
        let sat = s.value("s", RelativeCoord, ValueRule::Any);
        let val = s.value("v", RelativeCoord, ValueRule::Any);
        let variation = s.message("material_variation", vec![v_type, v_slot, h, sat, val]);
        let variations = s.repeated("material_variations", variation, 0, Cap::Unbounded, ListRule::Variations);

        let noise = s.value("noise_level", NoiseLevel, ValueRule::Any);
        let height = s.value("height", AbsoluteCoord, ValueRule::Positive);
        let root = s.message("building", vec![noise, height, footprints, facades, storeys, variations]);
        s.with_root(root)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Frame {
    Message {
        node: NodeId,
        next: u16,
    },
    /// On top of the stack: waiting for `ITEM` or `END_REPEATED`.
    Repeated {
        node: NodeId,
        count: u32,
    },
    /// On top of the stack: waiting for `PRESENT` or `ABSENT`.
    Optional {
        node: NodeId,
    },
    Value {
        node: NodeId,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct Registers {
    vertex_counts: Vec<u32>,
    footprints: u32,
    facades: u32,
    facade_segments: u32,
    next_segment: u32,
    segment_first: u32,
    prev_offset: u32,
    q3: u32,
    prev_elevation: u32,
    variation_prev: Option<(u32, u32)>,
    variation_asset: u32,
}

/// Automaton state. Cheap to clone; clone to branch.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrammarState {
    stack: Vec<Frame>,
    regs: Registers,
}

impl GrammarState {
    pub fn is_accept(&self) -> bool {
        self.stack.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.stack.len()
    }
}

/// What the state at the top of the automaton consumes next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expectation {
    /// A token of `group` with local index in `lo..hi`, other than `except`.
    Value {
        group: GroupKind,
        lo: u32,
        hi: u32,
        except: Option<u32>,
    },
    /// A list continuation decision.
    Decision {
        item: bool,
        end: bool,
    },
    /// `PRESENT` or `ABSENT`.
    Selector,
    Accept,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("token {token} is not valid at {field}")]
    Invalid { token: u32, field: String },
    #[error("token {token} follows a complete sequence")]
    AfterAccept { token: u32 },
}

#[derive(Debug, Clone)]
pub struct Grammar {
    vocab: Vocabulary,
    schema: Schema,
    start: GrammarState,
}

impl Grammar {
    pub fn new(vocab: Vocabulary) -> Self {
        Self::with_schema(vocab, Schema::building())
    }

    pub(crate) fn with_schema(vocab: Vocabulary, schema: Schema) -> Self {
        let mut g = Grammar { vocab, schema, start: GrammarState { stack: vec![], regs: Registers::default() } };
        let mut s = g.start.clone();
        g.enter(&mut s, g.schema.root());
        g.settle(&mut s);
        g.start = s;
        g
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub(crate) fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn start(&self) -> GrammarState {
        self.start.clone()
    }

    /// Dotted path of the field the state is positioned at.
    pub fn describe(&self, s: &GrammarState) -> String {
        if s.stack.is_empty() {
            return "<accept>".into();
        }
        let names: Vec<&str> = s
            .stack
            .iter()
            .map(|f| {
                let node = match f {
                    Frame::Message { node, .. }
                    | Frame::Repeated { node, .. }
                    | Frame::Optional { node }
                    | Frame::Value { node } => *node,
                };
                match self.schema.node(node) {
                    Node::Value { name, .. }
                    | Node::Message { name, .. }
                    | Node::Repeated { name, .. }
                    | Node::Optional { name, .. } => *name,
                }
            })
            .collect();
        names.join(".")
    }

    fn cap(&self, cap: Cap) -> u32 {
        match cap {
            Cap::Unbounded => u32::MAX,
            Cap::Fixed(n) => n,
            Cap::Pointer => self.vocab.config().pointer_cardinality,
        }
    }

    fn zero_local(&self, group: GroupKind) -> u32 {
        self.vocab.quantize_local(0.0, group)
    }

    fn variation_asset_lo(&self, r: &Registers) -> u32 {
        match r.variation_prev {
            None => 0,
            Some((a, slot)) if slot + 1 < self.vocab.config().pointer_cardinality => a,
            Some((a, _)) => a + 1,
        }
    }

    fn can_continue(&self, rule: ListRule, r: &Registers) -> bool {
        match rule {
            ListRule::Patterns => r.next_segment < r.facade_segments,
            ListRule::Variations => self.variation_asset_lo(r) < self.vocab.config().catalog_size,
            _ => true,
        }
    }

    fn value_range(&self, group: GroupKind, rule: ValueRule, r: &Registers) -> (u32, u32, Option<u32>) {
        let card = self.vocab.group(group).cardinality;
        match rule {
            ValueRule::Any | ValueRule::QuatFirst => (0, card, None),
            ValueRule::Positive => (self.zero_local(group) + 1, card, None),
            ValueRule::NondecreasingOffset => (r.prev_offset, card, None),
            ValueRule::NondecreasingElevation => (r.prev_elevation, card, None),
            ValueRule::FootprintPointer => (0, r.footprints, None),
            ValueRule::FacadePointer => (0, r.facades, None),
            ValueRule::SegmentFirst => (r.next_segment, r.facade_segments, None),
            ValueRule::SegmentLast => (r.segment_first, r.facade_segments, None),
            ValueRule::QuatSecond => {
                let zero = self.zero_local(group);
                (0, card, (r.q3 == zero).then_some(zero))
            }
            ValueRule::VariationAsset => (self.variation_asset_lo(r), card, None),
            ValueRule::VariationSlot => {
                let lo = match r.variation_prev {
                    Some((a, slot)) if a == r.variation_asset => slot + 1,
                    _ => 0,
                };
                (lo, card, None)
            }
        }
    }

    fn commit(&self, rule: ValueRule, local: u32, r: &mut Registers) {
        match rule {
            ValueRule::NondecreasingOffset => r.prev_offset = local,
            ValueRule::NondecreasingElevation => r.prev_elevation = local,
            ValueRule::FootprintPointer => {
                r.facade_segments = r.vertex_counts[local as usize];
                r.next_segment = 0;
            }
            ValueRule::SegmentFirst => r.segment_first = local,
            ValueRule::SegmentLast => r.next_segment = local + 1,
            ValueRule::QuatFirst => r.q3 = local,
            ValueRule::VariationAsset => r.variation_asset = local,
            ValueRule::VariationSlot => r.variation_prev = Some((r.variation_asset, local)),
            ValueRule::Any | ValueRule::Positive | ValueRule::FacadePointer | ValueRule::QuatSecond => {}
        }
    }

    fn enter(&self, s: &mut GrammarState, node: NodeId) {
        match self.schema.node(node) {
            Node::Value { .. } => s.stack.push(Frame::Value { node }),
            Node::Message { .. } => s.stack.push(Frame::Message { node, next: 0 }),
            Node::Optional { .. } => s.stack.push(Frame::Optional { node }),
            Node::Repeated { rule, .. } => {
                match rule {
                    ListRule::Cells => s.regs.prev_offset = 0,
                    ListRule::Storeys => s.regs.prev_elevation = 0,
                    ListRule::Patterns => s.regs.next_segment = 0,
                    ListRule::Variations => s.regs.variation_prev = None,
                    _ => {}
                }
                s.stack.push(Frame::Repeated { node, count: 0 });
            }
        }
    }

    /// Pops the completed top frame and propagates completion upwards.
    fn finish_top(&self, s: &mut GrammarState) {
        s.stack.pop();
        loop {
            match s.stack.last_mut() {
                Some(Frame::Repeated { count, .. }) => {
                    *count += 1;
                    return;
                }
                Some(Frame::Optional { .. }) => {
                    s.stack.pop();
                }
                _ => return,
            }
        }
    }

    /// Advances through messages until the top frame consumes a token.
    fn settle(&self, s: &mut GrammarState) {
        while let Some(Frame::Message { node, next }) = s.stack.last_mut() {
            let Node::Message { fields, .. } = self.schema.node(*node) else { unreachable!() };
            if (*next as usize) < fields.len() {
                let child = fields[*next as usize];
                *next += 1;
                self.enter(s, child);
            } else {
                self.finish_top(s);
            }
        }
    }

    pub fn expectation(&self, s: &GrammarState) -> Expectation {
        match s.stack.last() {
            None => Expectation::Accept,
            Some(Frame::Value { node }) => {
                let Node::Value { group, rule, .. } = self.schema.node(*node) else { unreachable!() };
                let (lo, hi, except) = self.value_range(*group, *rule, &s.regs);
                Expectation::Value { group: *group, lo, hi, except }
            }
            Some(Frame::Repeated { node, count }) => {
                let Node::Repeated { min, cap, rule, .. } = self.schema.node(*node) else { unreachable!() };
                Expectation::Decision { item: *count < self.cap(*cap) && self.can_continue(*rule, &s.regs), end: *count >= *min }
            }
            Some(Frame::Optional { .. }) => Expectation::Selector,
            Some(Frame::Message { .. }) => unreachable!("settled states never expose a message frame"),
        }
    }

    /// Whether `id` is a valid next token; agrees with [`Self::valid_next`].
    pub fn accepts(&self, s: &GrammarState, id: u32) -> bool {
        match self.expectation(s) {
            Expectation::Accept => false,
            Expectation::Value { group, lo, hi, except } => match self.vocab.classify(id) {
                Some((g, local)) => g == group && local >= lo && local < hi && except != Some(local),
                None => false,
            },
            Expectation::Decision { item, end } => match self.vocab.as_control(id) {
                Some(Control::Item) => item,
                Some(Control::EndRepeated) => end,
                _ => false,
            },
            Expectation::Selector => matches!(self.vocab.as_control(id), Some(Control::Present | Control::Absent)),
        }
    }

    pub fn valid_next(&self, s: &GrammarState) -> TokenMask {
        let mut m = TokenMask::new(self.vocab.size());
        match self.expectation(s) {
            Expectation::Accept => {}
            Expectation::Value { group, lo, hi, except } => {
                let off = self.vocab.group(group).offset;
                m.insert_range(off + lo, off + hi.max(lo));
                if let Some(e) = except {
                    m.remove(off + e);
                }
            }
            Expectation::Decision { item, end } => {
                if item {
                    m.insert(self.vocab.control(Control::Item));
                }
                if end {
                    m.insert(self.vocab.control(Control::EndRepeated));
                }
            }
            Expectation::Selector => {
                m.insert(self.vocab.control(Control::Present));
                m.insert(self.vocab.control(Control::Absent));
            }
        }
        m
    }

    /// In-place transition; leaves `s` untouched on error.
    pub fn advance(&self, s: &mut GrammarState, id: u32) -> Result<(), StepError> {
        if s.stack.is_empty() {
            return Err(StepError::AfterAccept { token: id });
        }
        if !self.accepts(s, id) {
            return Err(StepError::Invalid { token: id, field: self.describe(s) });
        }
        match s.stack.last().cloned() {
            Some(Frame::Value { node }) => {
                let Node::Value { rule, .. } = self.schema.node(node) else { unreachable!() };
                let (_, local) = self.vocab.classify(id).expect("accepted token classifies");
                self.commit(*rule, local, &mut s.regs);
                self.finish_top(s);
            }
            Some(Frame::Repeated { node, count }) => {
                let Node::Repeated { item, rule, .. } = self.schema.node(node) else { unreachable!() };
                if self.vocab.as_control(id) == Some(Control::Item) {
                    self.enter(s, *item);
                } else {
                    match rule {
                        ListRule::Footprints => s.regs.footprints = count,
                        ListRule::Vertices => s.regs.vertex_counts.push(count),
                        ListRule::Facades => s.regs.facades = count,
                        _ => {}
                    }
                    self.finish_top(s);
                }
            }
            Some(Frame::Optional { node }) => {
                let Node::Optional { item, .. } = self.schema.node(node) else { unreachable!() };
                if self.vocab.as_control(id) == Some(Control::Present) {
                    self.enter(s, *item);
                } else {
                    self.finish_top(s);
                }
            }
            Some(Frame::Message { .. }) | None => unreachable!(),
        }
        self.settle(s);
        Ok(())
    }

    pub fn step(&self, s: &GrammarState, id: u32) -> Result<GrammarState, StepError> {
        let mut next = s.clone();
        self.advance(&mut next, id)?;
        Ok(next)
    }
}
