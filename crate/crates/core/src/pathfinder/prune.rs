use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::enumerate::{cycle_component, passable};
use super::{ExecutionPath, Multiplicity, PathSet, RootVariable};
use crate::cfg::{BlockId, Cfg, EdgeKind, Terminator};
use crate::isa::{DumpSnapshot, Op, Operand, Program};

/// Three-valued constant-propagation lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbstractValue {
    Const(i64),
    /// Produced on the path by SETX, LOAD or arithmetic on non-constants.
    Unknown,
    /// Written somewhere on the path, so the fault-time register value says
    /// nothing about it at the path start.
    Overwritten,
}

impl AbstractValue {
    fn constant(self) -> Option<i64> {
        match self {
            AbstractValue::Const(v) => Some(v),
            _ => None,
        }
    }
}

type State = BTreeMap<String, AbstractValue>;

fn block_writes<'a>(program: &'a Program, cfg: &Cfg, b: BlockId) -> impl Iterator<Item = &'a str> {
    cfg.block(b).span().filter_map(move |i| program.op(i).write().map(|(v, _)| v))
}

fn transfer(state: &mut State, op: &Op) {
    let read = |state: &State, o: &Operand| match o {
        Operand::Imm(v) => AbstractValue::Const(*v),
        Operand::Var(v) => match state.get(v) {
            Some(AbstractValue::Const(c)) => AbstractValue::Const(*c),
            _ => AbstractValue::Unknown,
        },
    };
    match op {
        Op::Set { dst, src } => {
            let v = read(state, src);
            state.insert(dst.clone(), v);
        }
        Op::SetX { dst } | Op::Load { dst, .. } => {
            state.insert(dst.clone(), AbstractValue::Unknown);
        }
        Op::Adjust { op, dst, src } => {
            let lhs = state.get(dst).and_then(|v| v.constant());
            let v = match (lhs, read(state, src).constant()) {
                (Some(a), Some(b)) => AbstractValue::Const(op.apply(a, b)),
                _ => AbstractValue::Unknown,
            };
            state.insert(dst.clone(), v);
        }
        _ => {}
    }
}

/// Forward constant propagation along one path. Returns false when a branch
/// the path relies on is decided the other way by a known constant.
///
/// Loops collapsed into a ONE_OR_MORE block may have run any number of
/// times, so everything written inside the block's loop component is
/// reset to unknown before the block is interpreted.
pub fn is_feasible(path: &ExecutionPath, dump: &DumpSnapshot, cfg: &Cfg, root: &RootVariable) -> bool {
    let program = &dump.program;
    let allowed = passable(program, cfg, &root.name, path.designation);
    let ranges = path.ranges(cfg);
    let loops: Vec<Vec<BlockId>> = path
        .blocks
        .iter()
        .map(|pb| match pb.mult {
            Multiplicity::OneOrMore => cycle_component(cfg, &allowed, pb.block),
            Multiplicity::One => Vec::new(),
        })
        .collect();

    let mut written: BTreeSet<&str> =
        ranges.iter().flat_map(|r| r.clone()).filter_map(|i| program.op(i).write().map(|(v, _)| v)).collect();
    for comp in &loops {
        for &b in comp {
            written.extend(block_writes(program, cfg, b));
        }
    }
    let mut state: State = program
        .variables()
        .into_iter()
        .map(|v| {
            let init = if written.contains(v) {
                AbstractValue::Overwritten
            } else {
                dump.register(v).map_or(AbstractValue::Unknown, AbstractValue::Const)
            };
            (v.to_string(), init)
        })
        .collect();

    for (k, pb) in path.blocks.iter().enumerate() {
        for &b in &loops[k] {
            for v in block_writes(program, cfg, b) {
                state.insert(v.to_string(), AbstractValue::Unknown);
            }
        }
        for i in ranges[k].clone() {
            transfer(&mut state, program.op(i));
        }
        let Some(next) = path.blocks.get(k + 1) else { break };
        let Terminator::Branch { var, cond } = &cfg.block(pb.block).terminator else { continue };
        let Some(edge) = cfg.edge(pb.block, next.block) else { return false };
        let two_way = cfg.successors(pb.block).count() == 2;
        if let (true, Some(v)) = (two_way, state.get(var).and_then(|v| v.constant())) {
            if cond.taken(v) != (edge.kind == EdgeKind::Taken) {
                return false;
            }
        }
    }
    true
}

/// Drops paths refuted by constant propagation and re-indexes the rest.
pub fn prune_infeasible(paths: PathSet, dump: &DumpSnapshot, cfg: &Cfg, root: &RootVariable) -> PathSet {
    let truncated = paths.truncated;
    PathSet { paths: paths.paths.into_iter().filter(|p| is_feasible(p, dump, cfg, root)).collect(), truncated }
        .reindex()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_dump;
    use crate::pathfinder::{enumerate_paths, find_root_variable, DEFAULT_PATH_CAP};

    fn run(text: &str) -> (PathSet, PathSet) {
        let d = parse_dump(text).unwrap();
        let cfg = Cfg::from_program(&d.program);
        let root = find_root_variable(&d).unwrap();
        let all = enumerate_paths(&cfg, &d, &root, DEFAULT_PATH_CAP);
        let kept = prune_infeasible(all.clone(), &d, &cfg, &root);
        (all, kept)
    }

    #[test]
    fn two_loop_keeps_both_paths() {
        let (all, kept) = run(include_str!("../../../../fixtures/two-loop.dump"));
        assert_eq!(all, kept);
    }

    #[test]
    fn branch_on_fresh_constant() {
        let text = "%PROGRAM\nSETX p\nSET v, 0\nBRZ v, l\nSET u, 1\nl: PRINT p\nHALT\n\
                    %REGISTERS\np = 9000\nv = 0\nu = 0\n%MEMORY\nBLOCK base=4096 len=800 key=1\n\
                    %ERROR\ntype = PASTHELD\ninstr = 4\naddr = 9000\n";
        let (all, kept) = run(text);
        assert_eq!(all.len(), 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.paths[0].block_ids(), vec![0, 2]);
        assert_eq!(kept.paths[0].id, 0);
    }

    #[test]
    fn register_value_of_unwritten_variable_prunes() {
        // c is never written, and its fault-time value 1 rules out the taken edge
        let text = "%PROGRAM\nSETX p\nBRZ c, l\nSET u, 1\nl: PRINT p\nHALT\n\
                    %REGISTERS\np = 9000\nc = 1\nu = 0\n%MEMORY\nBLOCK base=4096 len=800 key=1\n\
                    %ERROR\ntype = PASTHELD\ninstr = 3\naddr = 9000\n";
        let (_, kept) = run(text);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept.paths[0].block_ids(), vec![0, 1, 2]);
    }

    #[test]
    fn loop_writes_are_havocked() {
        // n counts down in the loop, so its register value is not usable
        // at the loop's exit branch
        let text = "%PROGRAM\nSET p, 4096\nSET n, 3\nx: ADD p, 8\nSUB n, 1\nBRNZ n, x\nPRINT p\nHALT\n\
                    %REGISTERS\np = 9000\nn = 0\n%MEMORY\nBLOCK base=4096 len=800 key=1\n\
                    %ERROR\ntype = PASTHELD\ninstr = 5\naddr = 9000\n";
        let (all, kept) = run(text);
        assert_eq!(all, kept);
        assert_eq!(kept.paths[0].to_string(), "B0 -> B1+ -> B2");
    }
}
