//! The four PASTHELD findings extracted per path.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::Cfg;
use crate::isa::{DumpSnapshot, Op, Operand, Program};
use crate::pathfinder::{is_adjust_of, is_designating, Designation, ExecutionPath, Multiplicity, RootVariable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StructureClass {
    NoModifyFail,
    SetFail,
    AdjustFail,
    SetAdjustFail,
    AdjustInLoopFail,
    SetAdjustInLoopFail,
}

impl StructureClass {
    pub const ALL: [StructureClass; 6] = [
        StructureClass::NoModifyFail,
        StructureClass::SetFail,
        StructureClass::AdjustFail,
        StructureClass::SetAdjustFail,
        StructureClass::AdjustInLoopFail,
        StructureClass::SetAdjustInLoopFail,
    ];

    /// `l` implies `a`; `(s, false, true)` is read as `(s, true, true)`.
    pub fn from_flags(s: bool, a: bool, l: bool) -> StructureClass {
        match (s, a || l, l) {
            (false, false, _) => StructureClass::NoModifyFail,
            (true, false, _) => StructureClass::SetFail,
            (false, true, false) => StructureClass::AdjustFail,
            (true, true, false) => StructureClass::SetAdjustFail,
            (false, true, true) => StructureClass::AdjustInLoopFail,
            (true, true, true) => StructureClass::SetAdjustInLoopFail,
        }
    }

    pub fn has_set(self) -> bool {
        matches!(self, StructureClass::SetFail | StructureClass::SetAdjustFail | StructureClass::SetAdjustInLoopFail)
    }

    pub fn has_adjust(self) -> bool {
        !matches!(self, StructureClass::NoModifyFail | StructureClass::SetFail)
    }

    pub fn has_loop_adjust(self) -> bool {
        matches!(self, StructureClass::AdjustInLoopFail | StructureClass::SetAdjustInLoopFail)
    }

    pub fn name(self) -> &'static str {
        match self {
            StructureClass::NoModifyFail => "NO_MODIFY_FAIL",
            StructureClass::SetFail => "SET_FAIL",
            StructureClass::AdjustFail => "ADJUST_FAIL",
            StructureClass::SetAdjustFail => "SET_ADJUST_FAIL",
            StructureClass::AdjustInLoopFail => "ADJUST_IN_LOOP_FAIL",
            StructureClass::SetAdjustInLoopFail => "SET_ADJUST_IN_LOOP_FAIL",
        }
    }

    /// Title-cased form used in text reports, e.g. "Set Adjust in Loop Fail".
    pub fn title(self) -> &'static str {
        match self {
            StructureClass::NoModifyFail => "No Modify Fail",
            StructureClass::SetFail => "Set Fail",
            StructureClass::AdjustFail => "Adjust Fail",
            StructureClass::SetAdjustFail => "Set Adjust Fail",
            StructureClass::AdjustInLoopFail => "Adjust in Loop Fail",
            StructureClass::SetAdjustInLoopFail => "Set Adjust in Loop Fail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BorderProximity {
    NearEnd,
    FarFromEnd,
    NotApplicable,
}

impl BorderProximity {
    pub const ALL: [BorderProximity; 3] =
        [BorderProximity::NearEnd, BorderProximity::FarFromEnd, BorderProximity::NotApplicable];

    pub fn name(self) -> &'static str {
        match self {
            BorderProximity::NearEnd => "NEAR_END",
            BorderProximity::FarFromEnd => "FAR_FROM_END",
            BorderProximity::NotApplicable => "NOT_APPLICABLE",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            BorderProximity::NearEnd => "Near End",
            BorderProximity::FarFromEnd => "Far From End",
            BorderProximity::NotApplicable => "Not Applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown state `{0}`")]
pub struct UnknownState(pub String);

impl FromStr for StructureClass {
    type Err = UnknownState;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StructureClass::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| UnknownState(s.to_string()))
    }
}

impl FromStr for BorderProximity {
    type Err = UnknownState;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BorderProximity::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| UnknownState(s.to_string()))
    }
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for BorderProximity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathFindings {
    pub structure: StructureClass,
    pub close_regs: bool,
    pub neg_regs: bool,
    pub border_proximity: BorderProximity,
}

impl fmt::Display for PathFindings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "structure={} close_regs={} neg_regs={} border_proximity={}",
            self.structure, self.close_regs, self.neg_regs, self.border_proximity
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("findings line {line}: {reason}")]
pub struct FindingsError {
    pub line: usize,
    pub reason: String,
}

impl FromStr for PathFindings {
    type Err = String;

    /// Parses the `Display` form: four `key=value` fields in any order.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mut structure, mut close, mut neg, mut border) = (None, None, None, None);
        for field in s.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| format!("expected key=value, got `{field}`"))?;
            let bool_of = |v: &str| v.parse::<bool>().map_err(|_| format!("`{v}` is not true/false"));
            let slot_taken = match k {
                "structure" => structure.replace(v.parse::<StructureClass>().map_err(|e| e.to_string())?).is_some(),
                "close_regs" => close.replace(bool_of(v)?).is_some(),
                "neg_regs" => neg.replace(bool_of(v)?).is_some(),
                "border_proximity" => {
                    border.replace(v.parse::<BorderProximity>().map_err(|e| e.to_string())?).is_some()
                }
                _ => return Err(format!("unknown key `{k}`")),
            };
            if slot_taken {
                return Err(format!("duplicate key `{k}`"));
            }
        }
        Ok(PathFindings {
            structure: structure.ok_or("missing structure")?,
            close_regs: close.ok_or("missing close_regs")?,
            neg_regs: neg.ok_or("missing neg_regs")?,
            border_proximity: border.ok_or("missing border_proximity")?,
        })
    }
}

/// One findings record per non-blank line; `#` starts a comment.
pub fn parse_findings(text: &str) -> Result<Vec<PathFindings>, FindingsError> {
    text.lines()
        .enumerate()
        .map(|(n, l)| (n + 1, l.split('#').next().unwrap().trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(line, l)| l.parse().map_err(|reason| FindingsError { line, reason }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("close threshold must be positive, got {0}")]
    CloseThreshold(u64),
    #[error("neg threshold must be negative, got {0}")]
    NegThreshold(i64),
    #[error("near-end window must be positive, got {0}")]
    NearEndWindow(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceConfig {
    pub close_threshold: u64,
    pub neg_threshold: i64,
    pub near_end_window: u64,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        EvidenceConfig { close_threshold: 256, neg_threshold: -65536, near_end_window: 256 }
    }
}

impl EvidenceConfig {
    pub fn new(close_threshold: u64, neg_threshold: i64, near_end_window: u64) -> Result<Self, ConfigError> {
        if close_threshold == 0 {
            return Err(ConfigError::CloseThreshold(close_threshold));
        }
        if neg_threshold >= 0 {
            return Err(ConfigError::NegThreshold(neg_threshold));
        }
        if near_end_window == 0 {
            return Err(ConfigError::NearEndWindow(near_end_window));
        }
        Ok(EvidenceConfig { close_threshold, neg_threshold, near_end_window })
    }
}

/// Root-variable writes over the instructions a path covers.
pub fn classify_structure(path: &ExecutionPath, root: &RootVariable, program: &Program, cfg: &Cfg) -> StructureClass {
    let ranges = path.ranges(cfg);
    let mut s = false;
    let mut a = false;
    let mut l = false;
    for (pb, r) in path.blocks.iter().zip(ranges) {
        for i in r {
            let op = program.op(i);
            s |= is_designating(op, &root.name);
            if is_adjust_of(op, &root.name) {
                a = true;
                l |= pb.mult == Multiplicity::OneOrMore;
            }
        }
    }
    StructureClass::from_flags(s, a, l)
}

pub fn close_regs(dump: &DumpSnapshot, root: &RootVariable, cfg: &EvidenceConfig) -> bool {
    dump.registers
        .iter()
        .filter(|(name, _)| **name != root.name)
        .any(|(_, &v)| (v as i128 - root.value as i128).unsigned_abs() <= cfg.close_threshold as u128)
}

pub fn neg_regs(dump: &DumpSnapshot, path: &ExecutionPath, graph: &Cfg, cfg: &EvidenceConfig) -> bool {
    path.instructions(graph)
        .flat_map(|i| dump.program.op(i).touched())
        .any(|v| dump.register(v).is_some_and(|x| x < cfg.neg_threshold))
}

/// How close to the end of its block the root variable was initialised,
/// when the path sets it to a reconstructible value before a loop.
pub fn border_proximity(
    dump: &DumpSnapshot,
    path: &ExecutionPath,
    root: &RootVariable,
    graph: &Cfg,
    cfg: &EvidenceConfig,
) -> BorderProximity {
    if path.designation != Designation::SetOnPath || !path.blocks.iter().any(|b| b.mult == Multiplicity::OneOrMore) {
        return BorderProximity::NotApplicable;
    }
    let Op::Set { dst, src } = dump.program.op(path.start_instr) else {
        return BorderProximity::NotApplicable;
    };
    if *dst != root.name {
        return BorderProximity::NotApplicable;
    }
    let v0 = match src {
        Operand::Imm(v) => Some(*v),
        Operand::Var(v) => initial_constant(dump, path, graph, v),
    };
    let Some(v0) = v0 else {
        return BorderProximity::NotApplicable;
    };
    match dump.memory.legal_block_containing(v0 as u64) {
        Some(b) if b.end() - v0 as u64 as u128 <= cfg.near_end_window as u128 => BorderProximity::NearEnd,
        Some(_) => BorderProximity::FarFromEnd,
        None => BorderProximity::NotApplicable,
    }
}

/// The fault-time value of `var` when nothing on the path writes it, which
/// then equals its value at the path start.
fn initial_constant(dump: &DumpSnapshot, path: &ExecutionPath, graph: &Cfg, var: &str) -> Option<i64> {
    let written = path.instructions(graph).any(|i| dump.program.op(i).writes(var).is_some());
    if written {
        None
    } else {
        dump.register(var)
    }
}

pub fn extract_findings(
    dump: &DumpSnapshot,
    path: &ExecutionPath,
    root: &RootVariable,
    graph: &Cfg,
    cfg: &EvidenceConfig,
) -> PathFindings {
    PathFindings {
        structure: classify_structure(path, root, &dump.program, graph),
        close_regs: close_regs(dump, root, cfg),
        neg_regs: neg_regs(dump, path, graph, cfg),
        border_proximity: border_proximity(dump, path, root, graph, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_dump;
    use crate::pathfinder::{enumerate_paths, find_root_variable, DEFAULT_PATH_CAP};

    struct Case {
        dump: DumpSnapshot,
        cfg: Cfg,
        root: RootVariable,
        paths: Vec<ExecutionPath>,
    }

    fn case(text: &str) -> Case {
        let dump = parse_dump(text).unwrap();
        let cfg = Cfg::from_program(&dump.program);
        let root = find_root_variable(&dump).unwrap();
        let paths = enumerate_paths(&cfg, &dump, &root, DEFAULT_PATH_CAP).paths;
        Case { dump, cfg, root, paths }
    }

    fn loop_dump(init: &str, extra_regs: &str) -> String {
        format!(
            "%PROGRAM\nSETX n\n{init}\nx: ADD p, 8\nSUB n, 1\nBRNZ n, x\nPRINT p\nHALT\n\
             %REGISTERS\np = 4896\nn = 0\n{extra_regs}\n%MEMORY\nBLOCK base=4096 len=800 key=1\n\
             %ERROR\ntype = PASTHELD\ninstr = 5\naddr = 4896\n"
        )
    }

    #[test]
    fn two_loop_findings() {
        let c = case(include_str!("../../../fixtures/two-loop.dump"));
        let cfg = EvidenceConfig::default();
        let f: Vec<_> = c.paths.iter().map(|p| extract_findings(&c.dump, p, &c.root, &c.cfg, &cfg)).collect();
        assert_eq!(f[0].structure, StructureClass::SetAdjustInLoopFail);
        assert_eq!(f[1].structure, StructureClass::SetFail);
        assert!(!f[0].close_regs && !f[0].neg_regs);
        // var1 arrives via SETX, so the start value cannot be reconstructed
        assert_eq!(f[0].border_proximity, BorderProximity::NotApplicable);
    }

    #[test]
    fn border_near_and_far() {
        let cfg = EvidenceConfig::default();
        let near = case(&loop_dump("SET p, 4880", ""));
        let p = &near.paths[0];
        assert_eq!(p.to_string(), "B0 -> B1+ -> B2");
        assert_eq!(border_proximity(&near.dump, p, &near.root, &near.cfg, &cfg), BorderProximity::NearEnd);
        let far = case(&loop_dump("SET p, 4100", ""));
        assert_eq!(border_proximity(&far.dump, &far.paths[0], &far.root, &far.cfg, &cfg), BorderProximity::FarFromEnd);
        let outside = case(&loop_dump("SET p, 100", ""));
        assert_eq!(
            border_proximity(&outside.dump, &outside.paths[0], &outside.root, &outside.cfg, &cfg),
            BorderProximity::NotApplicable
        );
    }

    #[test]
    fn border_from_unwritten_source_register() {
        let cfg = EvidenceConfig::default();
        let c = case(&loop_dump("SET p, q", "q = 4880"));
        assert_eq!(border_proximity(&c.dump, &c.paths[0], &c.root, &c.cfg, &cfg), BorderProximity::NearEnd);
    }

    #[test]
    fn close_and_neg() {
        let cfg = EvidenceConfig::default();
        let c = case(&loop_dump("SET p, 4880", "q = 4980\nr = -16777216"));
        assert!(close_regs(&c.dump, &c.root, &cfg));
        // r is not touched by the path
        assert!(!neg_regs(&c.dump, &c.paths[0], &c.cfg, &cfg));
        let far = case(&loop_dump("SET p, 4880", "q = 5000000"));
        assert!(!close_regs(&far.dump, &far.root, &cfg));
        let neg = case(&loop_dump("SET p, r", "r = -16777216"));
        assert!(neg_regs(&neg.dump, &neg.paths[0], &neg.cfg, &cfg));
    }

    #[test]
    fn external_path_is_no_modify() {
        let c = case(
            "%PROGRAM\nSET u, 1\nPRINT p\nHALT\n%REGISTERS\np = 9000\nu = 1\n%MEMORY\nBLOCK base=4096 len=800 key=1\n\
             %ERROR\ntype = PASTHELD\ninstr = 1\naddr = 9000\n",
        );
        assert_eq!(c.paths[0].designation, Designation::External);
        assert_eq!(classify_structure(&c.paths[0], &c.root, &c.dump.program, &c.cfg), StructureClass::NoModifyFail);
    }

    #[test]
    fn config_validation() {
        assert!(EvidenceConfig::new(0, -1, 1).is_err());
        assert!(EvidenceConfig::new(1, 0, 1).is_err());
        assert!(EvidenceConfig::new(1, -1, 0).is_err());
        assert_eq!(EvidenceConfig::new(256, -65536, 256).unwrap(), EvidenceConfig::default());
    }

    #[test]
    fn findings_text_round_trip() {
        let f = PathFindings {
            structure: StructureClass::SetAdjustInLoopFail,
            close_regs: false,
            neg_regs: true,
            border_proximity: BorderProximity::NearEnd,
        };
        assert_eq!(parse_findings(&format!("# header\n{f}\n\n{f}")).unwrap(), vec![f, f]);
        let e =
            parse_findings("structure=SET_FAIL close_regs=maybe neg_regs=false border_proximity=NEAR_END").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(parse_findings("structure=SET_FAIL").is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in StructureClass::ALL {
            assert_eq!(s.name().parse::<StructureClass>().unwrap(), s);
        }
        for b in BorderProximity::ALL {
            assert_eq!(b.name().parse::<BorderProximity>().unwrap(), b);
        }
    }
}
