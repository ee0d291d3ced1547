use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The fourteen TinyASM mnemonics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    Set,
    SetX,
    Add,
    Sub,
    Mul,
    Shl,
    Shr,
    Jmp,
    Brz,
    Brnz,
    Load,
    Store,
    Print,
    Halt,
}

impl Opcode {
    pub const ALL: [Opcode; 14] = [
        Opcode::Set,
        Opcode::SetX,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Shl,
        Opcode::Shr,
        Opcode::Jmp,
        Opcode::Brz,
        Opcode::Brnz,
        Opcode::Load,
        Opcode::Store,
        Opcode::Print,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Set => "SET",
            Opcode::SetX => "SETX",
            Opcode::Add => "ADD",
            Opcode::Sub => "SUB",
            Opcode::Mul => "MUL",
            Opcode::Shl => "SHL",
            Opcode::Shr => "SHR",
            Opcode::Jmp => "JMP",
            Opcode::Brz => "BRZ",
            Opcode::Brnz => "BRNZ",
            Opcode::Load => "LOAD",
            Opcode::Store => "STORE",
            Opcode::Print => "PRINT",
            Opcode::Halt => "HALT",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        Opcode::ALL.into_iter().find(|op| op.mnemonic() == s)
    }

    fn arity(self) -> usize {
        match self {
            Opcode::Halt => 0,
            Opcode::SetX | Opcode::Jmp | Opcode::Print => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// A variable name or a signed immediate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Var(String),
    Imm(i64),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Var(v) => f.write_str(v),
            Operand::Imm(i) => write!(f, "{i}"),
        }
    }
}

/// Members of the "adjust" family: instructions that modify a variable in place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdjustOp {
    Add,
    Sub,
    Mul,
    Shl,
    Shr,
}

impl AdjustOp {
    pub fn opcode(self) -> Opcode {
        match self {
            AdjustOp::Add => Opcode::Add,
            AdjustOp::Sub => Opcode::Sub,
            AdjustOp::Mul => Opcode::Mul,
            AdjustOp::Shl => Opcode::Shl,
            AdjustOp::Shr => Opcode::Shr,
        }
    }

    /// Two's-complement wrapping evaluation. Shift amounts are validated
    /// to lie in `0..64` at construction time.
    pub fn apply(self, lhs: i64, rhs: i64) -> i64 {
        match self {
            AdjustOp::Add => lhs.wrapping_add(rhs),
            AdjustOp::Sub => lhs.wrapping_sub(rhs),
            AdjustOp::Mul => lhs.wrapping_mul(rhs),
            AdjustOp::Shl => lhs.wrapping_shl(rhs as u32),
            AdjustOp::Shr => lhs.wrapping_shr(rhs as u32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BranchCond {
    /// BRZ: taken when the variable equals zero.
    Zero,
    /// BRNZ: taken when the variable is nonzero.
    NonZero,
}

impl BranchCond {
    pub fn taken(self, value: i64) -> bool {
        match self {
            BranchCond::Zero => value == 0,
            BranchCond::NonZero => value != 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    Set { dst: String, src: Operand },
    SetX { dst: String },
    Adjust { op: AdjustOp, dst: String, src: Operand },
    Jmp { target: String },
    Branch { cond: BranchCond, var: String, target: String },
    Load { dst: String, base: String, offset: i64 },
    Store { base: String, offset: i64, src: String },
    Print { var: String },
    Halt,
}

/// How an instruction writes a variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WriteKind {
    Set,
    SetX,
    Adjust,
    Load,
}

impl Op {
    pub fn opcode(&self) -> Opcode {
        match self {
            Op::Set { .. } => Opcode::Set,
            Op::SetX { .. } => Opcode::SetX,
            Op::Adjust { op, .. } => op.opcode(),
            Op::Jmp { .. } => Opcode::Jmp,
            Op::Branch { cond: BranchCond::Zero, .. } => Opcode::Brz,
            Op::Branch { cond: BranchCond::NonZero, .. } => Opcode::Brnz,
            Op::Load { .. } => Opcode::Load,
            Op::Store { .. } => Opcode::Store,
            Op::Print { .. } => Opcode::Print,
            Op::Halt => Opcode::Halt,
        }
    }

    /// The variable written by this instruction, with the kind of write.
    pub fn write(&self) -> Option<(&str, WriteKind)> {
        match self {
            Op::Set { dst, .. } => Some((dst, WriteKind::Set)),
            Op::SetX { dst } => Some((dst, WriteKind::SetX)),
            Op::Adjust { dst, .. } => Some((dst, WriteKind::Adjust)),
            Op::Load { dst, .. } => Some((dst, WriteKind::Load)),
            _ => None,
        }
    }

    pub fn writes(&self, var: &str) -> Option<WriteKind> {
        self.write().filter(|(v, _)| *v == var).map(|(_, k)| k)
    }

    /// Variables whose values this instruction reads.
    pub fn reads(&self) -> Vec<&str> {
        let mut out = Vec::new();
        match self {
            Op::Set { src: Operand::Var(v), .. } => out.push(v.as_str()),
            Op::Adjust { dst, src, .. } => {
                out.push(dst.as_str());
                if let Operand::Var(v) = src {
                    out.push(v.as_str());
                }
            }
            Op::Branch { var, .. } => out.push(var),
            Op::Load { base, .. } => out.push(base),
            Op::Store { base, src, .. } => {
                out.push(base);
                out.push(src);
            }
            Op::Print { var } => out.push(var),
            _ => {}
        }
        out
    }

    /// Variables read or written.
    pub fn touched(&self) -> Vec<&str> {
        let mut out = self.reads();
        if let Some((v, _)) = self.write() {
            out.push(v);
        }
        out
    }

    pub fn branch_target(&self) -> Option<&str> {
        match self {
            Op::Jmp { target } | Op::Branch { target, .. } => Some(target),
            _ => None,
        }
    }

    pub fn is_control_transfer(&self) -> bool {
        matches!(self, Op::Jmp { .. } | Op::Branch { .. } | Op::Halt)
    }

    pub fn is_memory_ref(&self) -> bool {
        matches!(self, Op::Load { .. } | Op::Store { .. } | Op::Print { .. })
    }

    /// Address-carrying operands as `(variable, offset)`, in operand order.
    pub fn address_operands(&self) -> Vec<(&str, i64)> {
        match self {
            Op::Load { base, offset, .. } | Op::Store { base, offset, .. } => vec![(base, *offset)],
            Op::Print { var } => vec![(var, 0)],
            _ => Vec::new(),
        }
    }
}

fn fmt_mem(f: &mut fmt::Formatter<'_>, base: &str, offset: i64) -> fmt::Result {
    match offset {
        0 => write!(f, "[{base}]"),
        o if o > 0 => write!(f, "[{base}+{o}]"),
        o => write!(f, "[{base}-{}]", o.unsigned_abs()),
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.opcode().mnemonic();
        match self {
            Op::Set { dst, src } | Op::Adjust { dst, src, .. } => write!(f, "{m} {dst}, {src}"),
            Op::SetX { dst } => write!(f, "{m} {dst}"),
            Op::Jmp { target } => write!(f, "{m} {target}"),
            Op::Branch { var, target, .. } => write!(f, "{m} {var}, {target}"),
            Op::Load { dst, base, offset } => {
                write!(f, "{m} {dst}, ")?;
                fmt_mem(f, base, *offset)
            }
            Op::Store { base, offset, src } => {
                write!(f, "{m} ")?;
                fmt_mem(f, base, *offset)?;
                write!(f, ", {src}")
            }
            Op::Print { var } => write!(f, "{m} {var}"),
            Op::Halt => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub index: usize,
    pub label: Option<String>,
    pub op: Op,
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.label {
            Some(l) => write!(f, "{l}: {}", self.op),
            None => write!(f, "    {}", self.op),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseReason {
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("{opcode} expects {expected} operand(s), found {found}")]
    Arity { opcode: Opcode, expected: usize, found: usize },
    #[error("malformed operand `{0}`")]
    BadOperand(String),
    #[error("shift amount {0} outside 0..64")]
    BadShift(i64),
    #[error("malformed label `{0}`")]
    BadLabel(String),
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("undefined label `{0}`")]
    UndefinedLabel(String),
    #[error("control falls off the end of the program")]
    TrailingFallThrough,
    #[error("program is empty")]
    EmptyProgram,
    #[error("{0}")]
    Syntax(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct ParseError {
    /// 1-based source line.
    pub line: usize,
    pub reason: ParseReason,
}

impl ParseError {
    pub fn new(line: usize, reason: ParseReason) -> Self {
        ParseError { line, reason }
    }
}

/// A validated TinyASM program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    instructions: Vec<Instruction>,
    labels: BTreeMap<String, usize>,
}

impl Program {
    /// Validates a list of `(label, op)` pairs. Errors carry 1-based
    /// instruction positions as their line numbers.
    pub fn new(items: Vec<(Option<String>, Op)>) -> Result<Program, ParseError> {
        let lines: Vec<usize> = (1..=items.len()).collect();
        Program::with_lines(items, &lines)
    }

    fn with_lines(items: Vec<(Option<String>, Op)>, lines: &[usize]) -> Result<Program, ParseError> {
        if items.is_empty() {
            return Err(ParseError::new(1, ParseReason::EmptyProgram));
        }
        let mut labels = BTreeMap::new();
        let mut instructions = Vec::with_capacity(items.len());
        for (index, (label, op)) in items.into_iter().enumerate() {
            if let Some(l) = &label {
                if !is_identifier(l) {
                    return Err(ParseError::new(lines[index], ParseReason::BadLabel(l.clone())));
                }
                if labels.insert(l.clone(), index).is_some() {
                    return Err(ParseError::new(lines[index], ParseReason::DuplicateLabel(l.clone())));
                }
            }
            if let Op::Adjust { op: AdjustOp::Shl | AdjustOp::Shr, src, .. } = &op {
                match src {
                    Operand::Imm(n) if (0..64).contains(n) => {}
                    Operand::Imm(n) => return Err(ParseError::new(lines[index], ParseReason::BadShift(*n))),
                    Operand::Var(v) => return Err(ParseError::new(lines[index], ParseReason::BadOperand(v.clone()))),
                }
            }
            instructions.push(Instruction { index, label, op });
        }
        for ins in &instructions {
            if let Some(t) = ins.op.branch_target() {
                if !labels.contains_key(t) {
                    return Err(ParseError::new(lines[ins.index], ParseReason::UndefinedLabel(t.to_string())));
                }
            }
        }
        let last = instructions.last().expect("non-empty");
        if !matches!(last.op, Op::Halt | Op::Jmp { .. }) {
            return Err(ParseError::new(lines[last.index], ParseReason::TrailingFallThrough));
        }
        Ok(Program { instructions, labels })
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Instruction> {
        self.instructions.get(index)
    }

    pub fn op(&self, index: usize) -> &Op {
        &self.instructions[index].op
    }

    pub fn labels(&self) -> &BTreeMap<String, usize> {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.get(label).copied()
    }

    /// Resolved target of a JMP/BRZ/BRNZ at `index`.
    pub fn target_of(&self, index: usize) -> Option<usize> {
        self.op(index).branch_target().and_then(|t| self.label_index(t))
    }

    /// Every variable named anywhere in the program, sorted.
    pub fn variables(&self) -> BTreeSet<&str> {
        self.instructions.iter().flat_map(|i| i.op.touched()).collect()
    }

    /// Variables some instruction reads.
    pub fn read_variables(&self) -> BTreeSet<&str> {
        self.instructions.iter().flat_map(|i| i.op.reads()).collect()
    }

    /// Instruction indices of every SETX.
    pub fn setx_sites(&self) -> Vec<usize> {
        self.instructions.iter().filter(|i| matches!(i.op, Op::SetX { .. })).map(|i| i.index).collect()
    }

    /// Returns a copy with the op at `index` replaced, revalidated.
    pub fn with_op(&self, index: usize, op: Op) -> Result<Program, ParseError> {
        let items = self
            .instructions
            .iter()
            .map(|i| (i.label.clone(), if i.index == index { op.clone() } else { i.op.clone() }))
            .collect();
        Program::new(items)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for ins in &self.instructions {
            writeln!(f, "{ins}")?;
        }
        Ok(())
    }
}

pub(crate) fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Strips a `#` comment and surrounding whitespace.
pub(crate) fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

/// Parses program text. Blank lines and `#` comments are ignored.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    parse_program_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
}

pub(crate) fn parse_program_lines<'a>(
    lines: impl IntoIterator<Item = (usize, &'a str)>,
) -> Result<Program, ParseError> {
    let mut items = Vec::new();
    let mut line_numbers = Vec::new();
    let mut pending_label: Option<(usize, String)> = None;
    for (lineno, raw) in lines {
        let mut line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let mut label = None;
        if let Some(colon) = line.find(':') {
            let name = line[..colon].trim();
            if !is_identifier(name) {
                return Err(ParseError::new(lineno, ParseReason::BadLabel(name.to_string())));
            }
            label = Some(name.to_string());
            line = line[colon + 1..].trim();
        }
        if line.is_empty() {
            // a label on its own line attaches to the next instruction
            if let Some((_, prev)) = &pending_label {
                return Err(ParseError::new(lineno, ParseReason::Syntax(format!("label `{prev}` has no instruction"))));
            }
            pending_label = label.map(|l| (lineno, l));
            continue;
        }
        if let Some((pl, prev)) = pending_label.take() {
            if label.is_some() {
                return Err(ParseError::new(pl, ParseReason::Syntax(format!("label `{prev}` has no instruction"))));
            }
            label = Some(prev);
        }
        let op = parse_op(line).map_err(|r| ParseError::new(lineno, r))?;
        items.push((label, op));
        line_numbers.push(lineno);
    }
    if let Some((pl, prev)) = pending_label {
        return Err(ParseError::new(pl, ParseReason::Syntax(format!("label `{prev}` has no instruction"))));
    }
    if items.is_empty() {
        return Err(ParseError::new(1, ParseReason::EmptyProgram));
    }
    Program::with_lines(items, &line_numbers)
}

fn parse_op(text: &str) -> Result<Op, ParseReason> {
    let (mnemonic, rest) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => (text, ""),
    };
    let opcode = Opcode::from_mnemonic(mnemonic).ok_or_else(|| ParseReason::UnknownOpcode(mnemonic.to_string()))?;
    let args: Vec<&str> = if rest.is_empty() { Vec::new() } else { rest.split(',').map(str::trim).collect() };
    if args.len() != opcode.arity() {
        return Err(ParseReason::Arity { opcode, expected: opcode.arity(), found: args.len() });
    }
    let op = match opcode {
        Opcode::Set => Op::Set { dst: var(args[0])?, src: operand(args[1])? },
        Opcode::SetX => Op::SetX { dst: var(args[0])? },
        Opcode::Add | Opcode::Sub | Opcode::Mul => {
            let op = match opcode {
                Opcode::Add => AdjustOp::Add,
                Opcode::Sub => AdjustOp::Sub,
                _ => AdjustOp::Mul,
            };
            Op::Adjust { op, dst: var(args[0])?, src: operand(args[1])? }
        }
        Opcode::Shl | Opcode::Shr => {
            let amount = imm(args[1])?;
            if !(0..64).contains(&amount) {
                return Err(ParseReason::BadShift(amount));
            }
            let op = if opcode == Opcode::Shl { AdjustOp::Shl } else { AdjustOp::Shr };
            Op::Adjust { op, dst: var(args[0])?, src: Operand::Imm(amount) }
        }
        Opcode::Jmp => Op::Jmp { target: var(args[0])? },
        Opcode::Brz | Opcode::Brnz => {
            let cond = if opcode == Opcode::Brz { BranchCond::Zero } else { BranchCond::NonZero };
            Op::Branch { cond, var: var(args[0])?, target: var(args[1])? }
        }
        Opcode::Load => {
            let (base, offset) = mem(args[1])?;
            Op::Load { dst: var(args[0])?, base, offset }
        }
        Opcode::Store => {
            let (base, offset) = mem(args[0])?;
            Op::Store { base, offset, src: var(args[1])? }
        }
        Opcode::Print => Op::Print { var: var(args[0])? },
        Opcode::Halt => Op::Halt,
    };
    Ok(op)
}

fn var(s: &str) -> Result<String, ParseReason> {
    if is_identifier(s) {
        Ok(s.to_string())
    } else {
        Err(ParseReason::BadOperand(s.to_string()))
    }
}

fn imm(s: &str) -> Result<i64, ParseReason> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(ParseReason::BadOperand(s.to_string()));
    }
    s.parse().map_err(|_| ParseReason::BadOperand(s.to_string()))
}

fn operand(s: &str) -> Result<Operand, ParseReason> {
    if s.starts_with('-') || s.starts_with(|c: char| c.is_ascii_digit()) {
        imm(s).map(Operand::Imm)
    } else {
        var(s).map(Operand::Var)
    }
}

fn mem(s: &str) -> Result<(String, i64), ParseReason> {
    let bad = || ParseReason::BadOperand(s.to_string());
    let inner = s.strip_prefix('[').and_then(|r| r.strip_suffix(']')).ok_or_else(bad)?.trim();
    if let Some(i) = inner.find(['+', '-']) {
        let base = var(inner[..i].trim()).map_err(|_| bad())?;
        let magnitude = inner[i + 1..].trim();
        if magnitude.starts_with('-') {
            return Err(bad());
        }
        let text = if inner.as_bytes()[i] == b'-' { format!("-{magnitude}") } else { magnitude.to_string() };
        let offset = imm(&text).map_err(|_| bad())?;
        Ok((base, offset))
    } else {
        Ok((var(inner).map_err(|_| bad())?, 0))
    }
}
