use std::collections::VecDeque;
use std::ops::Range;

use super::{is_adjust_of, is_designating, Designation, ExecutionPath, Multiplicity, PathBlock, PathSet, RootVariable};
use crate::cfg::{BlockId, Cfg};
use crate::isa::{DumpSnapshot, Program, Trace};

pub const DEFAULT_PATH_CAP: usize = 512;

/// Node expansions allowed per emitted-path slot before the search gives up.
const BUDGET_PER_CAP: usize = 4096;

struct Walker<'a> {
    program: &'a Program,
    cfg: &'a Cfg,
    root: &'a str,
    fault: usize,
    /// Clean blocks (no write to root) reachable from the entry through
    /// clean blocks only.
    clean_reach: Vec<bool>,
    cap: usize,
    budget: usize,
    truncated: bool,
    out: Vec<ExecutionPath>,
}

impl Walker<'_> {
    fn range(&self, route: &[BlockId]) -> Range<usize> {
        let b = self.cfg.block(*route.last().unwrap());
        if route.len() == 1 {
            b.first..self.fault
        } else {
            b.first..b.last + 1
        }
    }

    fn stop(&mut self) -> bool {
        if self.budget == 0 {
            self.truncated = true;
        }
        self.truncated
    }

    /// `route` is in backward order: `route[0]` is the faulting block up
    /// to the fault, the last element is the node being expanded.
    fn visit(&mut self, route: &mut Vec<BlockId>, clean: bool) {
        if self.stop() {
            return;
        }
        self.budget -= 1;
        let cur = *route.last().unwrap();
        let range = self.range(route);
        let ops = |i: &usize| self.program.op(*i);

        if let Some(set) = range.clone().rev().find(|i| is_designating(ops(i), self.root)) {
            self.emit(route, set, Designation::SetOnPath);
            return;
        }
        let first_adjust = range.clone().find(|i| is_adjust_of(ops(i), self.root));
        let is_entry = cur == self.cfg.entry;
        match first_adjust {
            Some(a) => {
                let external_before = is_entry || self.cfg.parents(cur).iter().any(|e| self.clean_reach[e.from]);
                if external_before {
                    self.emit(route, a, Designation::SetOnPath);
                }
            }
            None if is_entry && clean => self.emit(route, 0, Designation::External),
            None => {}
        }
        let clean = clean && first_adjust.is_none();
        for e in self.cfg.parents(cur) {
            // a parent already on the route as a full block closes a cycle
            if route[1..].contains(&e.from) {
                continue;
            }
            route.push(e.from);
            self.visit(route, clean);
            route.pop();
            if self.truncated {
                return;
            }
        }
    }

    fn emit(&mut self, route: &[BlockId], start: usize, designation: Designation) {
        if self.out.len() >= self.cap {
            self.truncated = true;
            return;
        }
        let forward: Vec<BlockId> = route.iter().rev().copied().collect();
        let marks = multiplicities(self.program, self.cfg, self.root, &forward, start, designation);
        self.out.push(ExecutionPath {
            id: self.out.len(),
            blocks: forward.into_iter().zip(marks).map(|(block, mult)| PathBlock { block, mult }).collect(),
            start_instr: start,
            end_instr: self.fault,
            designation,
        });
    }
}

fn block_writes_root(program: &Program, cfg: &Cfg, b: BlockId, root: &str) -> bool {
    cfg.block(b).span().any(|i| program.op(i).writes(root).is_some())
}

fn block_designates_root(program: &Program, cfg: &Cfg, b: BlockId, root: &str) -> bool {
    cfg.block(b).span().any(|i| is_designating(program.op(i), root))
}

fn clean_reach(program: &Program, cfg: &Cfg, root: &str) -> Vec<bool> {
    let clean: Vec<bool> = (0..cfg.len()).map(|b| !block_writes_root(program, cfg, b, root)).collect();
    let mut seen = vec![false; cfg.len()];
    if cfg.is_empty() || !clean[cfg.entry] {
        return seen;
    }
    let mut queue = VecDeque::from([cfg.entry]);
    seen[cfg.entry] = true;
    while let Some(b) = queue.pop_front() {
        for e in cfg.successors(b) {
            if clean[e.to] && !seen[e.to] {
                seen[e.to] = true;
                queue.push_back(e.to);
            }
        }
    }
    seen
}

/// Blocks a loop may repeat through without invalidating the path's
/// designation: no designating write of root, and for EXTERNAL paths no
/// write of root at all.
pub(crate) fn passable(program: &Program, cfg: &Cfg, root: &str, designation: Designation) -> Vec<bool> {
    (0..cfg.len())
        .map(|b| match designation {
            Designation::SetOnPath => !block_designates_root(program, cfg, b, root),
            Designation::External => !block_writes_root(program, cfg, b, root),
        })
        .collect()
}

fn reach(cfg: &Cfg, allowed: &[bool], from: BlockId, forward: bool) -> Vec<bool> {
    let mut seen = vec![false; cfg.len()];
    let mut queue = VecDeque::from([from]);
    while let Some(b) = queue.pop_front() {
        let next: Vec<BlockId> = if forward {
            cfg.successors(b).map(|e| e.to).collect()
        } else {
            cfg.parents(b).iter().map(|e| e.from).collect()
        };
        for n in next {
            if allowed[n] && !seen[n] {
                seen[n] = true;
                queue.push_back(n);
            }
        }
    }
    seen
}

/// Blocks on some cycle through `b` inside the `allowed` subgraph; empty
/// when `b` is on no such cycle.
pub(crate) fn cycle_component(cfg: &Cfg, allowed: &[bool], b: BlockId) -> Vec<BlockId> {
    if !allowed[b] {
        return Vec::new();
    }
    let fwd = reach(cfg, allowed, b, true);
    let bwd = reach(cfg, allowed, b, false);
    if !fwd[b] {
        return Vec::new();
    }
    (0..cfg.len()).filter(|&x| fwd[x] && bwd[x]).collect()
}

/// Multiplicity marks for a forward route. A block is ONE_OR_MORE when it
/// can repeat: it sits on a cycle of blocks that do not disturb the
/// designation. The designating block of a SET cut and the faulting block
/// are always ONE.
pub fn multiplicities(
    program: &Program,
    cfg: &Cfg,
    root: &str,
    forward: &[BlockId],
    start: usize,
    designation: Designation,
) -> Vec<Multiplicity> {
    let allowed = passable(program, cfg, root, designation);
    let set_cut = designation == Designation::SetOnPath && is_designating(program.op(start), root);
    let n = forward.len();
    forward
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let fixed = k + 1 == n || (k == 0 && set_cut);
            if !fixed && !cycle_component(cfg, &allowed, b).is_empty() {
                Multiplicity::OneOrMore
            } else {
                Multiplicity::One
            }
        })
        .collect()
}

/// Depth-first backward enumeration from the fault. Parents are tried FALL
/// edge first, then by ascending block id. Each route stops at the nearest
/// designating write of root; an adjust of root also yields a path when
/// the value it adjusts may have entered from outside.
pub fn enumerate_paths(cfg: &Cfg, dump: &DumpSnapshot, root: &RootVariable, cap: usize) -> PathSet {
    let program = &dump.program;
    let fault = dump.fault.instr;
    let mut w = Walker {
        program,
        cfg,
        root: &root.name,
        fault,
        clean_reach: clean_reach(program, cfg, &root.name),
        cap: cap.max(1),
        budget: cap.max(1).saturating_mul(BUDGET_PER_CAP),
        truncated: false,
        out: Vec::new(),
    };
    let mut route = vec![cfg.block_of[fault]];
    w.visit(&mut route, true);
    PathSet { paths: w.out, truncated: w.truncated }
}

/// Block visits of a trace: (block, index of first step, index of last step).
fn visits(cfg: &Cfg, trace: &Trace) -> Vec<(BlockId, usize, usize)> {
    let mut out: Vec<(BlockId, usize, usize)> = Vec::new();
    for (k, s) in trace.steps.iter().enumerate() {
        let b = cfg.block_of[s.instr];
        match out.last_mut() {
            Some(v) if v.0 == b && cfg.block(b).first != s.instr => v.2 = k,
            _ => out.push((b, k, k)),
        }
    }
    out
}

/// Reduces a faulting trace to the path the backward search should have
/// found for it: from the last designating write of root (or the first
/// adjust, or program entry) to the fault, with loops erased. `None` when
/// the trace did not fault.
pub fn collapse_trace(program: &Program, cfg: &Cfg, trace: &Trace, root: &str) -> Option<ExecutionPath> {
    let fault = trace.fault()?;
    let last = trace.steps.len() - 1;
    let before = &trace.steps[..last];
    let (start_step, designation) =
        if let Some(k) = before.iter().rposition(|s| is_designating(program.op(s.instr), root)) {
            (k, Designation::SetOnPath)
        } else if let Some(k) = before.iter().position(|s| is_adjust_of(program.op(s.instr), root)) {
            (k, Designation::SetOnPath)
        } else {
            (0, Designation::External)
        };
    let start_instr = trace.steps[start_step].instr;
    let vs = visits(cfg, trace);
    let first = vs.iter().position(|v| v.1 <= start_step && start_step <= v.2).unwrap();

    // backward loop erasure; the faulting visit is never merged with
    // earlier visits of the same block
    let mut route: Vec<BlockId> = vec![vs.last().unwrap().0];
    for v in vs[first..vs.len() - 1].iter().rev() {
        match route[1..].iter().position(|&b| b == v.0) {
            Some(p) => route.truncate(p + 2),
            None => route.push(v.0),
        }
    }
    route.reverse();
    let marks = multiplicities(program, cfg, root, &route, start_instr, designation);
    Some(ExecutionPath {
        id: 0,
        blocks: route.into_iter().zip(marks).map(|(block, mult)| PathBlock { block, mult }).collect(),
        start_instr,
        end_instr: fault.instr,
        designation,
    })
}
