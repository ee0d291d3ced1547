use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gen::{harness_memory, Role, LEGAL_BASE, LEGAL_LEN};
use crate::cfg::Cfg;
use crate::diagnosis::ErrorClass;
use crate::isa::{execute, AdjustOp, DumpSnapshot, Externals, Op, Operand, Outcome, Program, DEFAULT_STEP_LIMIT};
use crate::pathfinder::{collapse_trace, find_root_variable, PathBlock};

/// Grid combinations tried per mutation site.
const EXTERNAL_TRIALS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InjectError {
    #[error("program has no site for a {0} fault")]
    NoCompatibleSite(ErrorClass),
    #[error("no external values make the {0} mutation fault")]
    NoFault(ErrorClass),
}

/// A program with one injected fault, the inputs that trigger it and the
/// ground-truth path the faulting run took.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub seed: u64,
    /// The mutated program (same as `dump.program`).
    pub program: Program,
    pub injected_class: ErrorClass,
    pub injected_site: usize,
    pub externals: Externals,
    pub dump: DumpSnapshot,
    pub true_path_blocks: Vec<PathBlock>,
}

/// External inputs of a program: its SETX sites and its never-assigned
/// addresses, each with the role that picks its grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSlots {
    pub setx: Vec<(usize, Role)>,
    pub entry: Vec<String>,
}

impl ExternalSlots {
    pub fn of(program: &Program) -> ExternalSlots {
        let setx = program
            .instructions()
            .iter()
            .filter_map(|i| match &i.op {
                Op::SetX { dst } => Some((i.index, Role::of(dst))),
                _ => None,
            })
            .collect();
        let entry =
            program.variables().into_iter().filter(|v| Role::of(v) == Role::Entered).map(str::to_string).collect();
        ExternalSlots { setx, entry }
    }

    fn grids(&self) -> Vec<&'static [i64]> {
        self.setx.iter().map(|(_, r)| r.grid()).chain(self.entry.iter().map(|_| Role::Entered.grid())).collect()
    }

    /// Size of the full grid product (saturating).
    pub fn grid_size(&self) -> usize {
        self.grids().iter().fold(1usize, |acc, g| acc.saturating_mul(g.len()))
    }

    fn build(&self, choice: &[i64]) -> Externals {
        let (sx, en) = choice.split_at(self.setx.len());
        Externals {
            setx: self.setx.iter().map(|(i, _)| *i).zip(sx.iter().copied()).collect(),
            entry: self.entry.iter().cloned().zip(en.iter().copied()).collect(),
        }
    }

    /// Every grid combination in lexicographic order.
    pub fn exhaustive(&self) -> Vec<Externals> {
        let grids = self.grids();
        let mut out = Vec::with_capacity(self.grid_size());
        let mut idx = vec![0usize; grids.len()];
        loop {
            let choice: Vec<i64> = idx.iter().zip(&grids).map(|(&k, g)| g[k]).collect();
            out.push(self.build(&choice));
            let mut d = grids.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < grids[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Up to `limit` combinations in random order: the whole grid when it
    /// is small enough, otherwise independent draws.
    pub fn sample(&self, limit: usize, rng: &mut ChaCha8Rng) -> Vec<Externals> {
        if self.grid_size() <= limit {
            let mut all = self.exhaustive();
            all.shuffle(rng);
            return all;
        }
        let grids = self.grids();
        (0..limit)
            .map(|_| {
                let choice: Vec<i64> = grids.iter().map(|g| g[rng.random_range(0..g.len())]).collect();
                self.build(&choice)
            })
            .collect()
    }
}

fn run(program: &Program, ext: &Externals) -> Option<Outcome> {
    execute(program, ext, &harness_memory(), DEFAULT_STEP_LIMIT).ok().map(|t| t.outcome)
}

fn is_address(v: &str) -> bool {
    matches!(Role::of(v), Role::Address | Role::Entered)
}

/// Candidate `(site, mutated program, variable expected at the root)`.
type Mutation = (usize, Program, Option<String>);

fn mutations(program: &Program, class: ErrorClass, rng: &mut ChaCha8Rng) -> Vec<Mutation> {
    let mut out = Vec::new();
    for ins in program.instructions() {
        let i = ins.index;
        let mutated = match (&ins.op, class) {
            (Op::Set { dst, src: Operand::Imm(v) }, ErrorClass::BadSet) if Role::of(dst) == Role::Address => {
                let shift = if rng.random_bool(0.5) { LEGAL_LEN } else { LEGAL_LEN + 80 };
                Some((Op::Set { dst: dst.clone(), src: Operand::Imm(v + shift) }, Some(dst.clone())))
            }
            (Op::Adjust { op, dst, src: Operand::Imm(v) }, ErrorClass::BadAdjust) if is_address(dst) => {
                let src = match op {
                    AdjustOp::Sub => Operand::Imm(v - LEGAL_LEN - 80),
                    _ => Operand::Imm(v + LEGAL_LEN + 80),
                };
                Some((Op::Adjust { op: *op, dst: dst.clone(), src }, Some(dst.clone())))
            }
            (Op::Set { dst, src: Operand::Imm(k) }, ErrorClass::BadLoop) if Role::of(dst) == Role::Counter => {
                Some((Op::Set { dst: dst.clone(), src: Operand::Imm(k + 1) }, None))
            }
            _ => None,
        };
        if let Some((op, root)) = mutated {
            out.push((i, program.with_op(i, op).expect("same shape"), root));
        }
    }
    if class == ErrorClass::EnteredBad {
        for q in ExternalSlots::of(program).entry {
            let site =
                program.instructions().iter().find(|ins| ins.op.touched().contains(&q.as_str())).map(|ins| ins.index);
            if let Some(site) = site {
                out.push((site, program.clone(), Some(q)));
            }
        }
    }
    out.shuffle(rng);
    out
}

/// Mutates `program` to plant one fault of `class` and searches the
/// external grid for inputs under which the mutant faults while the
/// original halts (for `ENTERED_BAD`: the entered address is illegal and
/// replacing it with the block base makes the run halt).
pub fn inject_fault(program: &Program, class: ErrorClass, seed: u64) -> Result<CorpusEntry, InjectError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let candidates = mutations(program, class, &mut rng);
    if candidates.is_empty() {
        return Err(InjectError::NoCompatibleSite(class));
    }
    let slots = ExternalSlots::of(program);
    let memory = harness_memory();
    for (site, mutant, expect_root) in candidates {
        for ext in slots.sample(EXTERNAL_TRIALS, &mut rng) {
            let control = match (&expect_root, class) {
                (Some(q), ErrorClass::EnteredBad) => {
                    if memory.is_legal(ext.entry[q] as u64) {
                        continue;
                    }
                    let mut fixed = ext.clone();
                    fixed.entry.insert(q.clone(), LEGAL_BASE);
                    fixed
                }
                _ => ext.clone(),
            };
            if run(program, &control) != Some(Outcome::Halted) {
                continue;
            }
            let Ok(trace) = execute(&mutant, &ext, &memory, DEFAULT_STEP_LIMIT) else { continue };
            let Some(Ok(dump)) = trace.to_dump(&mutant, &memory) else { continue };
            let Ok(root) = find_root_variable(&dump) else { continue };
            if expect_root.as_ref().is_some_and(|r| *r != root.name) {
                continue;
            }
            let cfg = Cfg::from_program(&mutant);
            let Some(path) = collapse_trace(&mutant, &cfg, &trace, &root.name) else { continue };
            return Ok(CorpusEntry {
                seed,
                program: mutant,
                injected_class: class,
                injected_site: site,
                externals: ext,
                dump,
                true_path_blocks: path.blocks,
            });
        }
    }
    Err(InjectError::NoFault(class))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::gen_program;
    use crate::isa::parse_program;

    #[test]
    fn bad_set_displaces_past_the_block() {
        let p = parse_program("SETX c0\nSET p0, 4096\nBRZ c0, x\nADD p0, 8\nx: LOAD t, [p0]\nHALT\n").unwrap();
        let e = inject_fault(&p, ErrorClass::BadSet, 1).unwrap();
        assert_eq!(e.injected_site, 1);
        let Op::Set { src: Operand::Imm(v), .. } = e.program.op(1) else { panic!() };
        assert!(*v >= 4896);
        let trace = execute(&e.program, &e.externals, &harness_memory(), DEFAULT_STEP_LIMIT).unwrap();
        assert_eq!(trace.fault(), Some(e.dump.fault));
    }

    #[test]
    fn entered_bad_leaves_code_alone() {
        let p = parse_program("SETX p0\nADD q0, 8\nLOAD t, [q0]\nLOAD t, [p0]\nHALT\n").unwrap();
        let e = inject_fault(&p, ErrorClass::EnteredBad, 5).unwrap();
        assert_eq!(e.program, p);
        assert!(!harness_memory().is_legal(e.externals.entry["q0"].wrapping_add(8) as u64));
    }

    #[test]
    fn loop_free_program_has_no_loop_site() {
        let p = parse_program("SETX p0\nADD p0, 8\nLOAD t, [p0]\nHALT\n").unwrap();
        assert_eq!(
            inject_fault(&p, ErrorClass::BadLoop, 0).unwrap_err(),
            InjectError::NoCompatibleSite(ErrorClass::BadLoop)
        );
    }

    #[test]
    fn injected_entries_replay() {
        let mut made = 0;
        for seed in 0..40 {
            let p = gen_program(seed, 20);
            for class in ErrorClass::ALL {
                if let Ok(e) = inject_fault(&p, class, seed) {
                    made += 1;
                    let t = execute(&e.program, &e.externals, &harness_memory(), DEFAULT_STEP_LIMIT).unwrap();
                    assert_eq!(t.fault(), Some(e.dump.fault));
                    assert_eq!(t.final_registers(), e.dump.registers);
                }
            }
        }
        assert!(made > 40, "only {made} injections succeeded");
    }
}
