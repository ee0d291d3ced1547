use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dump::{DumpSnapshot, Fault, MemoryMap, ValidationError};
use super::program::{Op, Operand, Program};

pub const DEFAULT_STEP_LIMIT: usize = 100_000;

/// Values supplied from outside the program: one per SETX site, plus
/// optional initial register values (variables default to 0).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Externals {
    pub setx: BTreeMap<usize, i64>,
    pub entry: BTreeMap<String, i64>,
}

impl Externals {
    pub fn from_setx(pairs: impl IntoIterator<Item = (usize, i64)>) -> Self {
        Externals { setx: pairs.into_iter().collect(), entry: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("SETX at instruction {0} has no external value")]
    MissingExternal(usize),
    #[error("step limit must be positive")]
    ZeroStepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Halted,
    Pastheld(Fault),
    StepLimit,
}

/// One executed instruction and the variable values after it ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub instr: usize,
    pub state: Box<[i64]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    /// Column names for every `Step::state`.
    pub variables: Vec<String>,
    pub steps: Vec<Step>,
    pub outcome: Outcome,
}

impl Trace {
    /// Variable values after the last step (initial values if nothing ran).
    pub fn final_registers(&self) -> BTreeMap<String, i64> {
        match self.steps.last() {
            Some(s) => self.variables.iter().cloned().zip(s.state.iter().copied()).collect(),
            None => BTreeMap::new(),
        }
    }

    pub fn fault(&self) -> Option<Fault> {
        match self.outcome {
            Outcome::Pastheld(f) => Some(f),
            _ => None,
        }
    }

    /// Builds the dump a PASTHELD trace would leave behind.
    pub fn to_dump(&self, program: &Program, memory: &MemoryMap) -> Option<Result<DumpSnapshot, ValidationError>> {
        let fault = self.fault()?;
        Some(DumpSnapshot::new(program.clone(), self.final_registers(), memory.clone(), fault))
    }

    pub fn instrs(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.instr)
    }
}

enum Slot {
    Var(usize),
    Imm(i64),
}

/// Runs `program` concretely. Deterministic in its inputs.
pub fn execute(
    program: &Program,
    externals: &Externals,
    memory: &MemoryMap,
    step_limit: usize,
) -> Result<Trace, ExecError> {
    if step_limit == 0 {
        return Err(ExecError::ZeroStepLimit);
    }
    if let Some(site) = program.setx_sites().into_iter().find(|s| !externals.setx.contains_key(s)) {
        return Err(ExecError::MissingExternal(site));
    }
    let variables: Vec<String> = program.variables().into_iter().map(str::to_string).collect();
    let index: HashMap<&str, usize> = variables.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
    let slot = |o: &Operand| match o {
        Operand::Var(v) => Slot::Var(index[v.as_str()]),
        Operand::Imm(i) => Slot::Imm(*i),
    };
    let mut state: Vec<i64> = variables.iter().map(|v| externals.entry.get(v).copied().unwrap_or(0)).collect();
    let read = |state: &[i64], s: &Slot| match s {
        Slot::Var(i) => state[*i],
        Slot::Imm(v) => *v,
    };

    let mut steps = Vec::new();
    let mut pc = 0usize;
    let outcome = loop {
        if steps.len() == step_limit {
            break Outcome::StepLimit;
        }
        let op = program.op(pc);
        let mut next = pc + 1;
        let mut fault = None;
        match op {
            Op::Set { dst, src } => state[index[dst.as_str()]] = read(&state, &slot(src)),
            Op::SetX { dst } => state[index[dst.as_str()]] = externals.setx[&pc],
            Op::Adjust { op, dst, src } => {
                let d = index[dst.as_str()];
                state[d] = op.apply(state[d], read(&state, &slot(src)));
            }
            Op::Jmp { .. } => next = program.target_of(pc).expect("validated target"),
            Op::Branch { cond, var, .. } => {
                if cond.taken(state[index[var.as_str()]]) {
                    next = program.target_of(pc).expect("validated target");
                }
            }
            Op::Load { .. } | Op::Store { .. } | Op::Print { .. } => {
                let (base, offset) = op.address_operands()[0];
                let addr = state[index[base]].wrapping_add(offset) as u64;
                if !memory.is_legal(addr) {
                    fault = Some(Fault { instr: pc, address: addr });
                } else if let Op::Load { dst, .. } = op {
                    // memory contents are not modelled: every legal byte reads as zero
                    state[index[dst.as_str()]] = 0;
                }
            }
            Op::Halt => {}
        }
        steps.push(Step { instr: pc, state: state.clone().into_boxed_slice() });
        if let Some(f) = fault {
            break Outcome::Pastheld(f);
        }
        if matches!(op, Op::Halt) {
            break Outcome::Halted;
        }
        pc = next;
    };
    Ok(Trace { variables, steps, outcome })
}
