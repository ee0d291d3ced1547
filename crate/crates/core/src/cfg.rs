//! Basic-block partitioning, the control-flow graph, and DOT export.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isa::{BranchCond, Op, Program};
use crate::pathfinder::{ExecutionPath, Multiplicity};

pub type BlockId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminator {
    /// The block runs into the next leader.
    FallThrough,
    Jmp,
    Branch {
        var: String,
        cond: BranchCond,
    },
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasicBlock {
    pub id: BlockId,
    pub first: usize,
    pub last: usize,
    pub terminator: Terminator,
}

impl BasicBlock {
    pub fn span(&self) -> RangeInclusive<usize> {
        self.first..=self.last
    }

    pub fn contains(&self, instr: usize) -> bool {
        self.span().contains(&instr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Fall,
    Taken,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: BlockId,
    pub to: BlockId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub blocks: Vec<BasicBlock>,
    /// Sorted by `(from, kind, to)`.
    pub edges: Vec<Edge>,
    pub entry: BlockId,
    /// Instruction index to containing block.
    pub block_of: Vec<BlockId>,
}

/// Leader set: instruction 0, every branch target, and the instruction
/// after every JMP, BRZ, BRNZ or HALT.
pub fn leaders(program: &Program) -> BTreeSet<usize> {
    let mut set = BTreeSet::from([0]);
    for ins in program.instructions() {
        if let Some(t) = program.target_of(ins.index) {
            set.insert(t);
        }
        if ins.op.is_control_transfer() && ins.index + 1 < program.len() {
            set.insert(ins.index + 1);
        }
    }
    set
}

pub fn partition_basic_blocks(program: &Program) -> Vec<BasicBlock> {
    let starts: Vec<usize> = leaders(program).into_iter().collect();
    starts
        .iter()
        .enumerate()
        .map(|(id, &first)| {
            let last = starts.get(id + 1).map_or(program.len() - 1, |next| next - 1);
            let terminator = match program.op(last) {
                Op::Jmp { .. } => Terminator::Jmp,
                Op::Branch { cond, var, .. } => Terminator::Branch { var: var.clone(), cond: *cond },
                Op::Halt => Terminator::Halt,
                _ => Terminator::FallThrough,
            };
            BasicBlock { id, first, last, terminator }
        })
        .collect()
}

pub fn build_cfg(blocks: Vec<BasicBlock>, program: &Program) -> Cfg {
    let mut block_of = vec![0; program.len()];
    for b in &blocks {
        for i in b.span() {
            block_of[i] = b.id;
        }
    }
    let mut edges = Vec::new();
    for b in &blocks {
        let fall = || block_of[b.last + 1];
        match &b.terminator {
            Terminator::FallThrough => edges.push(Edge { from: b.id, to: fall(), kind: EdgeKind::Fall }),
            Terminator::Jmp => {
                let t = block_of[program.target_of(b.last).expect("validated target")];
                edges.push(Edge { from: b.id, to: t, kind: EdgeKind::Taken });
            }
            Terminator::Branch { .. } => {
                let t = block_of[program.target_of(b.last).expect("validated target")];
                // validated programs never end in a branch, so a fall successor exists
                let f = fall();
                edges.push(Edge { from: b.id, to: f, kind: EdgeKind::Fall });
                if t != f {
                    edges.push(Edge { from: b.id, to: t, kind: EdgeKind::Taken });
                }
            }
            Terminator::Halt => {}
        }
    }
    edges.sort();
    Cfg { entry: block_of[0], blocks, edges, block_of }
}

impl Cfg {
    pub fn from_program(program: &Program) -> Cfg {
        build_cfg(partition_basic_blocks(program), program)
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id]
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn successors(&self, id: BlockId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == id)
    }

    /// Incoming edges ordered FALL before TAKEN, then by ascending parent id.
    pub fn parents(&self, id: BlockId) -> Vec<Edge> {
        let mut v: Vec<Edge> = self.edges.iter().filter(|e| e.to == id).copied().collect();
        v.sort_by_key(|e| (e.kind, e.from));
        v
    }

    pub fn edge(&self, from: BlockId, to: BlockId) -> Option<&Edge> {
        self.edges.iter().find(|e| e.from == from && e.to == to)
    }

    pub fn has_edge(&self, from: BlockId, to: BlockId) -> bool {
        self.edge(from, to).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DotError {
    #[error("highlighted path {path} references unknown block {block}")]
    UnknownBlock { path: usize, block: BlockId },
}

/// Renders the CFG as a DOT digraph. Edges and loop blocks used by any
/// highlighted path are drawn bold red; output order is by block id.
pub fn emit_dot(cfg: &Cfg, highlight: Option<&[ExecutionPath]>) -> Result<String, DotError> {
    let paths = highlight.unwrap_or(&[]);
    let mut hot_edges = BTreeSet::new();
    let mut hot_blocks = BTreeSet::new();
    let mut looped = BTreeSet::new();
    for p in paths {
        for pb in &p.blocks {
            if pb.block >= cfg.len() {
                return Err(DotError::UnknownBlock { path: p.id, block: pb.block });
            }
            hot_blocks.insert(pb.block);
            if pb.mult == Multiplicity::OneOrMore {
                looped.insert(pb.block);
            }
        }
        for w in p.blocks.windows(2) {
            hot_edges.insert((w[0].block, w[1].block));
        }
    }
    let mut out = String::new();
    out.push_str("digraph cfg {\n");
    out.push_str("  node [shape=box, fontname=\"monospace\"];\n");
    for b in &cfg.blocks {
        let _ = write!(out, "  b{} [label=\"B{}\\n{}..{}\"", b.id, b.id, b.first, b.last);
        if hot_blocks.contains(&b.id) {
            out.push_str(", color=red");
        }
        if looped.contains(&b.id) {
            out.push_str(", peripheries=2");
        }
        out.push_str("];\n");
    }
    for e in &cfg.edges {
        let kind = match e.kind {
            EdgeKind::Fall => "fall",
            EdgeKind::Taken => "taken",
        };
        let _ = write!(out, "  b{} -> b{} [label=\"{kind}\"", e.from, e.to);
        let self_loop_hot = e.from == e.to && looped.contains(&e.from);
        if hot_edges.contains(&(e.from, e.to)) || self_loop_hot {
            out.push_str(", color=red, penwidth=2");
        }
        out.push_str("];\n");
    }
    out.push_str("}\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_program;

    fn two_loop() -> Program {
        parse_program(crate::isa::program::tests::TWO_LOOP).unwrap()
    }

    #[test]
    fn two_loop_has_three_blocks() {
        let blocks = partition_basic_blocks(&two_loop());
        let spans: Vec<_> = blocks.iter().map(|b| (b.first, b.last)).collect();
        assert_eq!(spans, vec![(0, 2), (3, 5), (6, 10)]);
        assert_eq!(blocks[2].terminator, Terminator::Halt);
    }

    #[test]
    fn two_loop_edges() {
        let cfg = Cfg::from_program(&two_loop());
        let e = |from, to, kind| Edge { from, to, kind };
        assert_eq!(
            cfg.edges,
            vec![e(0, 1, EdgeKind::Fall), e(0, 2, EdgeKind::Taken), e(1, 2, EdgeKind::Fall), e(1, 1, EdgeKind::Taken),]
                .into_iter()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect::<Vec<_>>()
        );
        assert_eq!(cfg.entry, 0);
        assert_eq!(cfg.parents(2), vec![e(1, 2, EdgeKind::Fall), e(0, 2, EdgeKind::Taken)]);
    }

    #[test]
    fn straight_line_is_one_block() {
        let p = parse_program("SET a, 1\nADD a, 2\nPRINT a\nHALT").unwrap();
        let cfg = Cfg::from_program(&p);
        assert_eq!(cfg.len(), 1);
        assert!(cfg.edges.is_empty());
        assert_eq!(cfg.block_of, vec![0; 4]);
    }

    #[test]
    fn branch_to_next_instruction_has_one_edge() {
        let p = parse_program("SETX a\nBRZ a, n\nn: HALT").unwrap();
        let cfg = Cfg::from_program(&p);
        assert_eq!(cfg.edges, vec![Edge { from: 0, to: 1, kind: EdgeKind::Fall }]);
    }

    #[test]
    fn halt_mid_program_ends_block() {
        let p = parse_program("HALT\nSET a, 1\nHALT").unwrap();
        let cfg = Cfg::from_program(&p);
        assert_eq!(cfg.len(), 2);
        assert!(cfg.edges.is_empty());
    }

    #[test]
    fn dot_two_loop() {
        let cfg = Cfg::from_program(&two_loop());
        let dot = emit_dot(&cfg, None).unwrap();
        assert_eq!(dot.matches("[label=\"B").count(), 3);
        assert_eq!(dot.matches("->").count(), 4);
        assert_eq!(dot, emit_dot(&cfg, Some(&[])).unwrap());
    }
}
