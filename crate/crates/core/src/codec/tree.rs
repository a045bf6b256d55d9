//! Mapping between buildings and the schema-shaped tree of group-local token
//! values, plus generic emission and parsing of such trees.

use super::grammar::{Node, NodeId, Schema};
use super::vocab::{Control, GroupKind, Vocabulary};
use super::CodecError;
use crate::schema::{BuildingAbstraction, Cell, CellModifier, CellsPattern, Facade, Footprint, MaterialVariation, Storey};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum TokNode {
    Leaf(u32),
    Msg(Vec<TokNode>),
    List(Vec<TokNode>),
    Opt(Option<Box<TokNode>>),
}

pub(crate) fn emit(schema: &Schema, node: NodeId, tree: &TokNode, vocab: &Vocabulary, out: &mut Vec<u32>) {
    match (schema.node(node), tree) {
        (Node::Value { group, .. }, TokNode::Leaf(local)) => out.push(vocab.token(*group, *local)),
        (Node::Message { fields, .. }, TokNode::Msg(children)) => {
            for (f, c) in fields.iter().zip(children) {
                emit(schema, *f, c, vocab, out);
            }
        }
        (Node::Repeated { item, .. }, TokNode::List(items)) => {
            for it in items {
                out.push(vocab.control(Control::Item));
                emit(schema, *item, it, vocab, out);
            }
            out.push(vocab.control(Control::EndRepeated));
        }
        (Node::Optional { item, .. }, TokNode::Opt(inner)) => match inner {
            Some(it) => {
                out.push(vocab.control(Control::Present));
                emit(schema, *item, it, vocab, out);
            }
            None => out.push(vocab.control(Control::Absent)),
        },
        (n, t) => panic!("tree shape {t:?} does not match schema node {n:?}"),
    }
}

/// Recursive descent over a sequence the automaton has already accepted.
pub(crate) fn parse(schema: &Schema, node: NodeId, tokens: &[u32], pos: &mut usize, vocab: &Vocabulary) -> TokNode {
    match schema.node(node) {
        Node::Value { .. } => {
            let (_, local) = vocab.classify(tokens[*pos]).expect("validated token");
            *pos += 1;
            TokNode::Leaf(local)
        }
        Node::Message { fields, .. } => TokNode::Msg(fields.iter().map(|f| parse(schema, *f, tokens, pos, vocab)).collect()),
        Node::Repeated { item, .. } => {
            let mut items = Vec::new();
            loop {
                let t = tokens[*pos];
                *pos += 1;
                if vocab.as_control(t) == Some(Control::EndRepeated) {
                    break;
                }
                items.push(parse(schema, *item, tokens, pos, vocab));
            }
            TokNode::List(items)
        }
        Node::Optional { item, .. } => {
            let t = tokens[*pos];
            *pos += 1;
            if vocab.as_control(t) == Some(Control::Present) {
                TokNode::Opt(Some(Box::new(parse(schema, *item, tokens, pos, vocab))))
            } else {
                TokNode::Opt(None)
            }
        }
    }
}

fn check_capacity(what: &str, len: usize, limit: u32) -> Result<(), CodecError> {
    if len > limit as usize {
        return Err(CodecError::Capacity { what: what.into(), count: len, limit });
    }
    Ok(())
}

/// Height token: never the zero grid point, so the height stays positive.
pub(crate) fn height_local(vocab: &Vocabulary, height: f64) -> u32 {
    let zero = vocab.quantize_local(0.0, GroupKind::AbsoluteCoord);
    vocab.quantize_local(height, GroupKind::AbsoluteCoord).max(zero + 1)
}

pub(crate) fn building_to_tree(b: &BuildingAbstraction, vocab: &Vocabulary) -> Result<TokNode, CodecError> {
    use GroupKind::*;
    let cfg = vocab.config();
    let q = |v: f64, g: GroupKind| TokNode::Leaf(vocab.quantize_local(v, g));
    let asset = |path: String, t: usize| {
        if t >= cfg.catalog_size as usize {
            Err(CodecError::AssetOutOfRange { path, cell_type: t, catalog_size: cfg.catalog_size })
        } else {
            Ok(TokNode::Leaf(t as u32))
        }
    };
    let pointer = |what: &str, i: usize| {
        if i >= cfg.pointer_cardinality as usize {
            Err(CodecError::Capacity { what: what.into(), count: i + 1, limit: cfg.pointer_cardinality })
        } else {
            Ok(TokNode::Leaf(i as u32))
        }
    };

    let h_local = height_local(vocab, b.height);
    let height_q = vocab.dequantize_local(AbsoluteCoord, h_local);

    check_capacity("footprints", b.footprints.len(), cfg.pointer_cardinality)?;
    let footprints = b
        .footprints
        .iter()
        .map(|fp| {
            check_capacity("footprint vertices", fp.vertices.len(), cfg.pointer_cardinality)?;
            let verts = fp.vertices.iter().map(|v| TokNode::Msg(vec![q(v[0], AbsoluteCoord), q(v[1], AbsoluteCoord)])).collect();
            Ok(TokNode::Msg(vec![TokNode::List(verts)]))
        })
        .collect::<Result<Vec<_>, CodecError>>()?;

    check_capacity("facades", b.facades.len(), cfg.pointer_cardinality)?;
    let mut facades = Vec::with_capacity(b.facades.len());
    for (ai, f) in b.facades.iter().enumerate() {
        let mut patterns = Vec::with_capacity(f.cells_patterns.len());
        for (pi, p) in f.cells_patterns.iter().enumerate() {
            let mut cells = Vec::with_capacity(p.cells.len());
            for (ci, c) in p.cells.iter().enumerate() {
                let modifier = c.modifier.map(|m| {
                    Box::new(TokNode::Msg(vec![
                        q(m.scale_x, ScaleRotation),
                        q(m.scale_y, ScaleRotation),
                        q(m.quaternion_3, ScaleRotation),
                        q(m.quaternion_4, ScaleRotation),
                    ]))
                });
                cells.push(TokNode::Msg(vec![
                    asset(format!("facades[{ai}].cells_patterns[{pi}].cells[{ci}].cell_type"), c.cell_type)?,
                    q(c.offset, RelativeCoord),
                    TokNode::Opt(modifier),
                ]));
            }
            patterns.push(TokNode::Msg(vec![
                pointer("segment index", p.segment_range.0)?,
                pointer("segment index", p.segment_range.1)?,
                TokNode::List(cells),
            ]));
        }
        facades.push(TokNode::Msg(vec![pointer("footprint index", f.footprint_index)?, TokNode::List(patterns)]));
    }

    let storeys = b
        .storeys
        .iter()
        .map(|s| Ok(TokNode::Msg(vec![q(s.elevation / height_q, RelativeCoord), pointer("facade index", s.facade_index)?])))
        .collect::<Result<Vec<_>, CodecError>>()?;

    let variations = b
        .material_variations
        .iter()
        .enumerate()
        .map(|(vi, m)| {
            Ok(TokNode::Msg(vec![
                asset(format!("material_variations[{vi}].cell_type"), m.cell_type)?,
                pointer("material slot", m.material_slot)?,
                q(m.color[0], RelativeCoord),
                q(m.color[1], RelativeCoord),
                q(m.color[2], RelativeCoord),
            ]))
        })
        .collect::<Result<Vec<_>, CodecError>>()?;

    Ok(TokNode::Msg(vec![
        q(b.noise_level, NoiseLevel),
        TokNode::Leaf(h_local),
        TokNode::List(footprints),
        TokNode::List(facades),
        TokNode::List(storeys),
        TokNode::List(variations),
    ]))
}

fn leaf(t: &TokNode) -> u32 {
    match t {
        TokNode::Leaf(v) => *v,
        other => panic!("expected leaf, found {other:?}"),
    }
}

fn children(t: &TokNode) -> &[TokNode] {
    match t {
        TokNode::Msg(c) | TokNode::List(c) => c,
        other => panic!("expected message or list, found {other:?}"),
    }
}

pub(crate) fn tree_to_building(t: &TokNode, vocab: &Vocabulary) -> BuildingAbstraction {
    use GroupKind::*;
    let dq = |n: &TokNode, g: GroupKind| vocab.dequantize_local(g, leaf(n));
    let top = children(t);
    let height = dq(&top[1], AbsoluteCoord);

    let footprints = children(&top[2])
        .iter()
        .map(|fp| Footprint {
            vertices: children(&children(fp)[0])
                .iter()
                .map(|v| {
                    let xy = children(v);
                    [dq(&xy[0], AbsoluteCoord), dq(&xy[1], AbsoluteCoord)]
                })
                .collect(),
        })
        .collect();

    let facades = children(&top[3])
        .iter()
        .map(|f| {
            let f = children(f);
            Facade {
                footprint_index: leaf(&f[0]) as usize,
                cells_patterns: children(&f[1])
                    .iter()
                    .map(|p| {
                        let p = children(p);
                        CellsPattern {
                            segment_range: (leaf(&p[0]) as usize, leaf(&p[1]) as usize),
                            cells: children(&p[2])
                                .iter()
                                .map(|c| {
                                    let c = children(c);
                                    let modifier = match &c[2] {
                                        TokNode::Opt(Some(m)) => {
                                            let m = children(m);
                                            Some(CellModifier {
                                                scale_x: dq(&m[0], ScaleRotation),
                                                scale_y: dq(&m[1], ScaleRotation),
                                                quaternion_3: dq(&m[2], ScaleRotation),
                                                quaternion_4: dq(&m[3], ScaleRotation),
                                            })
                                        }
                                        _ => None,
                                    };
                                    Cell { cell_type: leaf(&c[0]) as usize, offset: dq(&c[1], RelativeCoord), modifier }
                                })
                                .collect(),
                        }
                    })
                    .collect(),
            }
        })
        .collect();

    let storeys = children(&top[4])
        .iter()
        .map(|s| {
            let s = children(s);
            Storey { elevation: height * dq(&s[0], RelativeCoord), facade_index: leaf(&s[1]) as usize }
        })
        .collect();

    let material_variations = children(&top[5])
        .iter()
        .map(|m| {
            let m = children(m);
            MaterialVariation {
                cell_type: leaf(&m[0]) as usize,
                material_slot: leaf(&m[1]) as usize,
                color: [dq(&m[2], RelativeCoord), dq(&m[3], RelativeCoord), dq(&m[4], RelativeCoord)],
            }
        })
        .collect();

    BuildingAbstraction { height, footprints, facades, storeys, material_variations, noise_level: dq(&top[0], NoiseLevel) }
}
