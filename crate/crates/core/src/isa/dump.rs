use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::program::{parse_program_lines, strip_comment, ParseError, ParseReason, Program};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtectKey {
    Protected,
    Available,
}

impl ProtectKey {
    pub fn code(self) -> u8 {
        match self {
            ProtectKey::Protected => 0,
            ProtectKey::Available => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemoryBlock {
    pub base: u64,
    pub len: u64,
    pub key: ProtectKey,
}

impl MemoryBlock {
    pub fn legal(base: u64, len: u64) -> Self {
        MemoryBlock { base, len, key: ProtectKey::Available }
    }

    pub fn protected(base: u64, len: u64) -> Self {
        MemoryBlock { base, len, key: ProtectKey::Protected }
    }

    /// One past the last byte, widened so blocks ending at 2^64 are representable.
    pub fn end(&self) -> u128 {
        self.base as u128 + self.len as u128
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.base <= addr && (addr as u128) < self.end()
    }

    pub fn is_available(&self) -> bool {
        self.key == ProtectKey::Available
    }
}

/// Where an address falls relative to a memory map. Exactly one holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Legality {
    Legal,
    Protected,
    Unmapped,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryMapError {
    #[error("block at {base} has zero length")]
    EmptyBlock { base: u64 },
    #[error("blocks at {first} and {second} overlap")]
    Overlap { first: u64, second: u64 },
}

/// Non-overlapping memory blocks, kept in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MemoryMap {
    blocks: Vec<MemoryBlock>,
}

impl MemoryMap {
    pub fn new(blocks: Vec<MemoryBlock>) -> Result<MemoryMap, MemoryMapError> {
        if let Some(b) = blocks.iter().find(|b| b.len == 0) {
            return Err(MemoryMapError::EmptyBlock { base: b.base });
        }
        let mut sorted: Vec<&MemoryBlock> = blocks.iter().collect();
        sorted.sort_by_key(|b| b.base);
        for w in sorted.windows(2) {
            if w[0].end() > w[1].base as u128 {
                return Err(MemoryMapError::Overlap { first: w[0].base, second: w[1].base });
            }
        }
        Ok(MemoryMap { blocks })
    }

    pub fn blocks(&self) -> &[MemoryBlock] {
        &self.blocks
    }

    pub fn classify(&self, addr: u64) -> Legality {
        match self.blocks.iter().find(|b| b.contains(addr)) {
            Some(b) if b.is_available() => Legality::Legal,
            Some(_) => Legality::Protected,
            None => Legality::Unmapped,
        }
    }

    pub fn is_legal(&self, addr: u64) -> bool {
        self.classify(addr) == Legality::Legal
    }

    /// Available blocks sorted by base.
    pub fn legal_blocks(&self) -> Vec<MemoryBlock> {
        let mut v: Vec<MemoryBlock> = self.blocks.iter().copied().filter(MemoryBlock::is_available).collect();
        v.sort_by_key(|b| b.base);
        v
    }

    pub fn legal_block_containing(&self, addr: u64) -> Option<MemoryBlock> {
        self.blocks.iter().copied().find(|b| b.is_available() && b.contains(addr))
    }

    /// Signed distance from `value` to the boundary of the nearest legal
    /// block: measured from the end of the legal block with the greatest
    /// base not above `value` (positive = past the end), or from the base of
    /// the lowest legal block when `value` precedes them all (negative).
    /// With no legal blocks the distance is measured from address 0.
    pub fn overshoot(&self, value: i64) -> i64 {
        let addr = value as u64;
        let legal = self.legal_blocks();
        let d: i128 = match legal.iter().rev().find(|b| b.base <= addr) {
            Some(b) => addr as i128 - b.end() as i128,
            None => match legal.first() {
                Some(b) => addr as i128 - b.base as i128,
                None => addr as i128,
            },
        };
        d.clamp(i64::MIN as i128, i64::MAX as i128) as i64
    }
}

/// Fault record for a PASTHELD error: an illegal memory reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fault {
    pub instr: usize,
    pub address: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("INCONSISTENT_FAULT: address {address} is legal under the memory map")]
    InconsistentFault { address: u64 },
    #[error("fault instruction {instr} does not exist")]
    FaultOutOfRange { instr: usize },
    #[error("fault instruction {instr} does not reference memory")]
    FaultNotMemoryRef { instr: usize },
    #[error("variable `{0}` is read by the program but missing from %REGISTERS")]
    MissingRegister(String),
    #[error(transparent)]
    Memory(#[from] MemoryMapError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DumpError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

/// Everything known at fault time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpSnapshot {
    pub program: Program,
    pub registers: BTreeMap<String, i64>,
    pub memory: MemoryMap,
    pub fault: Fault,
}

impl DumpSnapshot {
    pub fn new(
        program: Program,
        registers: BTreeMap<String, i64>,
        memory: MemoryMap,
        fault: Fault,
    ) -> Result<DumpSnapshot, ValidationError> {
        let ins = program.get(fault.instr).ok_or(ValidationError::FaultOutOfRange { instr: fault.instr })?;
        if !ins.op.is_memory_ref() {
            return Err(ValidationError::FaultNotMemoryRef { instr: fault.instr });
        }
        if memory.is_legal(fault.address) {
            return Err(ValidationError::InconsistentFault { address: fault.address });
        }
        if let Some(v) = program.read_variables().into_iter().find(|v| !registers.contains_key(*v)) {
            return Err(ValidationError::MissingRegister(v.to_string()));
        }
        Ok(DumpSnapshot { program, registers, memory, fault })
    }

    pub fn register(&self, var: &str) -> Option<i64> {
        self.registers.get(var).copied()
    }
}

impl fmt::Display for DumpSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "%PROGRAM")?;
        write!(f, "{}", self.program)?;
        writeln!(f, "%REGISTERS")?;
        for (k, v) in &self.registers {
            writeln!(f, "{k} = {v}")?;
        }
        writeln!(f, "%MEMORY")?;
        for b in self.memory.blocks() {
            writeln!(f, "BLOCK base={} len={} key={}", b.base, b.len, b.key.code())?;
        }
        writeln!(f, "%ERROR")?;
        writeln!(f, "type = PASTHELD")?;
        writeln!(f, "instr = {}", self.fault.instr)?;
        writeln!(f, "addr = {}", self.fault.address)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Program,
    Registers,
    Memory,
    Error,
}

impl Section {
    fn from_header(s: &str) -> Option<Section> {
        match s {
            "%PROGRAM" => Some(Section::Program),
            "%REGISTERS" => Some(Section::Registers),
            "%MEMORY" => Some(Section::Memory),
            "%ERROR" => Some(Section::Error),
            _ => None,
        }
    }
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::new(line, ParseReason::Syntax(msg.into()))
}

fn split_kv(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn parse_u64(lineno: usize, s: &str) -> Result<u64, ParseError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(lineno, format!("expected unsigned integer, found `{s}`")));
    }
    s.parse().map_err(|_| syntax(lineno, format!("value `{s}` out of range")))
}

fn parse_i64(lineno: usize, s: &str) -> Result<i64, ParseError> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(syntax(lineno, format!("expected signed integer, found `{s}`")));
    }
    s.parse().map_err(|_| syntax(lineno, format!("value `{s}` out of range")))
}

/// Parses and validates a dump file.
pub fn parse_dump(text: &str) -> Result<DumpSnapshot, DumpError> {
    let mut sections: BTreeMap<u8, (usize, Vec<(usize, &str)>)> = BTreeMap::new();
    let mut current: Option<Section> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        if line.starts_with('%') {
            let s = Section::from_header(line).ok_or_else(|| syntax(lineno, format!("unknown section `{line}`")))?;
            if sections.contains_key(&(s as u8)) {
                return Err(syntax(lineno, format!("section `{line}` appears twice")).into());
            }
            sections.insert(s as u8, (lineno, Vec::new()));
            current = Some(s);
            continue;
        }
        let s = current.ok_or_else(|| syntax(lineno, "content before the first section header"))?;
        sections.get_mut(&(s as u8)).expect("section opened").1.push((lineno, raw));
    }
    let mut take = |s: Section, name: &str| {
        sections
            .remove(&(s as u8))
            .ok_or_else(|| syntax(text.lines().count().max(1), format!("missing section %{name}")))
    };
    let (prog_line, prog_lines) = take(Section::Program, "PROGRAM")?;
    let (_, reg_lines) = take(Section::Registers, "REGISTERS")?;
    let (_, mem_lines) = take(Section::Memory, "MEMORY")?;
    let (err_line, err_lines) = take(Section::Error, "ERROR")?;

    let program = if prog_lines.is_empty() {
        return Err(ParseError::new(prog_line, ParseReason::EmptyProgram).into());
    } else {
        parse_program_lines(prog_lines)?
    };

    let mut registers = BTreeMap::new();
    for (lineno, raw) in reg_lines {
        let line = strip_comment(raw);
        let (k, v) = split_kv(line).ok_or_else(|| syntax(lineno, "expected `NAME = value`"))?;
        if !super::program::is_identifier(k) {
            return Err(syntax(lineno, format!("bad register name `{k}`")).into());
        }
        if registers.insert(k.to_string(), parse_i64(lineno, v)?).is_some() {
            return Err(syntax(lineno, format!("register `{k}` listed twice")).into());
        }
    }

    let mut blocks = Vec::new();
    for (lineno, raw) in mem_lines {
        let line = strip_comment(raw);
        let rest = line
            .strip_prefix("BLOCK")
            .filter(|r| r.starts_with(char::is_whitespace))
            .ok_or_else(|| syntax(lineno, "expected `BLOCK base=<u64> len=<u64> key=<0|1>`"))?;
        let (mut base, mut len, mut key) = (None, None, None);
        for field in rest.split_whitespace() {
            let (k, v) = split_kv(field).ok_or_else(|| syntax(lineno, format!("malformed field `{field}`")))?;
            let slot = match k {
                "base" => &mut base,
                "len" => &mut len,
                "key" => &mut key,
                _ => return Err(syntax(lineno, format!("unknown key `{k}`")).into()),
            };
            if slot.replace(parse_u64(lineno, v)?).is_some() {
                return Err(syntax(lineno, format!("duplicate key `{k}`")).into());
            }
        }
        let missing = |n: &str| syntax(lineno, format!("missing `{n}`"));
        let key = match key.ok_or_else(|| missing("key"))? {
            0 => ProtectKey::Protected,
            1 => ProtectKey::Available,
            k => return Err(syntax(lineno, format!("protect key must be 0 or 1, found {k}")).into()),
        };
        blocks.push(MemoryBlock {
            base: base.ok_or_else(|| missing("base"))?,
            len: len.ok_or_else(|| missing("len"))?,
            key,
        });
    }
    let memory = MemoryMap::new(blocks).map_err(ValidationError::from)?;

    let (mut kind, mut instr, mut addr) = (None, None, None);
    for (lineno, raw) in err_lines {
        let line = strip_comment(raw);
        let (k, v) = split_kv(line).ok_or_else(|| syntax(lineno, "expected `key = value`"))?;
        let dup = || syntax(lineno, format!("duplicate key `{k}`"));
        match k {
            "type" => {
                if v != "PASTHELD" {
                    return Err(syntax(lineno, format!("unsupported error type `{v}`")).into());
                }
                if kind.replace(()).is_some() {
                    return Err(dup().into());
                }
            }
            "instr" => {
                if instr.replace(parse_u64(lineno, v)? as usize).is_some() {
                    return Err(dup().into());
                }
            }
            "addr" => {
                if addr.replace(parse_u64(lineno, v)?).is_some() {
                    return Err(dup().into());
                }
            }
            _ => return Err(syntax(lineno, format!("unknown key `{k}`")).into()),
        }
    }
    let missing = |n: &str| syntax(err_line, format!("%ERROR is missing `{n}`"));
    kind.ok_or_else(|| missing("type"))?;
    let fault = Fault { instr: instr.ok_or_else(|| missing("instr"))?, address: addr.ok_or_else(|| missing("addr"))? };
    Ok(DumpSnapshot::new(program, registers, memory, fault)?)
}
