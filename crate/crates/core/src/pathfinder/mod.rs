//! Backward path search from a PASTHELD fault.
//!
//! The search starts at the faulting instruction, identifies the variable
//! holding the illegal address, and walks the CFG backward until it meets
//! the write that gave that variable its value. Loops on the way are
//! collapsed into a single "one or more times" block rather than unrolled.

mod enumerate;
mod prune;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::{BlockId, Cfg};
use crate::isa::{DumpSnapshot, Op, WriteKind};

pub use enumerate::{collapse_trace, enumerate_paths, multiplicities, DEFAULT_PATH_CAP};
pub use prune::{is_feasible, prune_infeasible, AbstractValue};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RootVariable {
    pub name: String,
    pub value: i64,
    /// Signed distance past the end of the nearest legal block.
    pub overshoot: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("no operand of the faulting instruction {instr} holds an illegal address")]
    NoRootVariable { instr: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Multiplicity {
    One,
    OneOrMore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathBlock {
    pub block: BlockId,
    pub mult: Multiplicity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Designation {
    /// The root variable is written at `start_instr`.
    SetOnPath,
    /// The value entered the segment from outside.
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExecutionPath {
    pub id: usize,
    /// Forward order; the last element is the faulting block.
    pub blocks: Vec<PathBlock>,
    pub start_instr: usize,
    pub end_instr: usize,
    pub designation: Designation,
}

impl ExecutionPath {
    pub fn block_ids(&self) -> Vec<BlockId> {
        self.blocks.iter().map(|b| b.block).collect()
    }

    /// Half-open instruction range each path element contributes: the first
    /// element starts at `start_instr`, the last stops before the fault.
    pub fn ranges(&self, cfg: &Cfg) -> Vec<Range<usize>> {
        let n = self.blocks.len();
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, pb)| {
                let b = cfg.block(pb.block);
                let lo = if k == 0 { self.start_instr } else { b.first };
                let hi = if k + 1 == n { self.end_instr } else { b.last + 1 };
                lo..hi
            })
            .collect()
    }

    /// Every instruction index the path covers, in path order.
    pub fn instructions(&self, cfg: &Cfg) -> impl Iterator<Item = usize> {
        self.ranges(cfg).into_iter().flatten()
    }

    /// Same blocks, marks, start and designation (ids ignored).
    pub fn same_route(&self, other: &ExecutionPath) -> bool {
        self.blocks == other.blocks
            && self.start_instr == other.start_instr
            && self.end_instr == other.end_instr
            && self.designation == other.designation
    }
}

impl fmt::Display for ExecutionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, pb) in self.blocks.iter().enumerate() {
            if k > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "B{}", pb.block)?;
            if pb.mult == Multiplicity::OneOrMore {
                f.write_str("+")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSet {
    pub paths: Vec<ExecutionPath>,
    /// The cap or the search budget was hit.
    pub truncated: bool,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    fn reindex(mut self) -> PathSet {
        for (i, p) in self.paths.iter_mut().enumerate() {
            p.id = i;
        }
        self
    }
}

/// Picks the address operand of the faulting instruction whose value is
/// illegal. Several illegal operands: smallest |overshoot|, then operand order.
pub fn find_root_variable(dump: &DumpSnapshot) -> Result<RootVariable, PathError> {
    let instr = dump.fault.instr;
    dump.program
        .op(instr)
        .address_operands()
        .into_iter()
        .filter_map(|(var, _)| {
            let value = dump.register(var)?;
            (!dump.memory.is_legal(value as u64)).then(|| RootVariable {
                name: var.to_string(),
                value,
                overshoot: dump.memory.overshoot(value),
            })
        })
        .enumerate()
        .min_by_key(|(pos, r)| (r.overshoot.unsigned_abs(), *pos))
        .map(|(_, r)| r)
        .ok_or(PathError::NoRootVariable { instr })
}

/// A write that fixes the root variable's value outright (as opposed to an
/// adjust, which derives it from the previous value).
pub(crate) fn is_designating(op: &Op, var: &str) -> bool {
    matches!(op.writes(var), Some(WriteKind::Set | WriteKind::SetX | WriteKind::Load))
}

pub(crate) fn is_adjust_of(op: &Op, var: &str) -> bool {
    op.writes(var) == Some(WriteKind::Adjust)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_dump;

    const TWO_LOOP_DUMP: &str = include_str!("../../../../fixtures/two-loop.dump");

    #[test]
    fn two_loop_root_is_var1() {
        let d = parse_dump(TWO_LOOP_DUMP).unwrap();
        let r = find_root_variable(&d).unwrap();
        assert_eq!(r, RootVariable { name: "var1".into(), value: 4976, overshoot: 80 });
    }

    fn dump_with(value: i64) -> DumpSnapshot {
        let text = format!(
            "%PROGRAM\nSETX p\nPRINT p\nHALT\n%REGISTERS\np = {value}\n%MEMORY\nBLOCK base=4096 len=800 key=1\n%ERROR\ntype = PASTHELD\ninstr = 1\naddr = {}\n",
            value as u64
        );
        parse_dump(&text).unwrap()
    }

    #[test]
    fn below_block_has_negative_overshoot() {
        let r = find_root_variable(&dump_with(4000)).unwrap();
        assert_eq!(r.overshoot, -96);
    }

    #[test]
    fn legal_operand_is_not_a_root() {
        let d = parse_dump(TWO_LOOP_DUMP).unwrap();
        let mut regs = d.registers.clone();
        regs.insert("var1".into(), 4096);
        // bypass the snapshot constructor: the fault is now inconsistent
        let d = DumpSnapshot { registers: regs, ..d };
        assert_eq!(find_root_variable(&d), Err(PathError::NoRootVariable { instr: 9 }));
    }
}
