use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::network::{DiscreteNetwork, NetworkNode};
use crate::evidence::{BorderProximity, PathFindings, StructureClass};
use crate::scalar::Probability;

/// Competing explanations for an illegal address held by the root variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorClass {
    /// The variable was initialised to a bad value.
    BadSet,
    /// A later modification produced the bad value.
    BadAdjust,
    /// The value was already bad when the segment was entered.
    EnteredBad,
    /// A loop ran the wrong number of times.
    BadLoop,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 4] =
        [ErrorClass::BadSet, ErrorClass::BadAdjust, ErrorClass::EnteredBad, ErrorClass::BadLoop];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::BadSet => "BAD_SET",
            ErrorClass::BadAdjust => "BAD_ADJUST",
            ErrorClass::EnteredBad => "ENTERED_BAD",
            ErrorClass::BadLoop => "BAD_LOOP",
        }
    }

    /// Report label, e.g. "BAD SET".
    pub fn label(self) -> &'static str {
        match self {
            ErrorClass::BadSet => "BAD SET",
            ErrorClass::BadAdjust => "BAD ADJUST",
            ErrorClass::EnteredBad => "ENTERED BAD",
            ErrorClass::BadLoop => "BAD LOOP",
        }
    }

    /// Whether a path of structure `s` can harbour this class at all.
    pub fn compatible_with(self, s: StructureClass) -> bool {
        match self {
            ErrorClass::BadSet => s.has_set(),
            ErrorClass::BadAdjust => s.has_adjust(),
            ErrorClass::EnteredBad => s == StructureClass::NoModifyFail,
            ErrorClass::BadLoop => s.has_loop_adjust(),
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ErrorClass::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown error class `{s}`"))
    }
}

/// States of the hypothesis node: the four classes, then NO_ERROR.
pub const HYPOTHESES: [&str; 5] = ["BAD_SET", "BAD_ADJUST", "ENTERED_BAD", "BAD_LOOP", "NO_ERROR"];
pub const NO_ERROR: usize = 4;

const BOOL_STATES: [&str; 2] = ["false", "true"];

/// Evidence nodes of the PASTHELD network, in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvidenceNode {
    Structure,
    CloseRegs,
    NegRegs,
    BorderProximity,
}

impl EvidenceNode {
    pub const ALL: [EvidenceNode; 4] =
        [EvidenceNode::Structure, EvidenceNode::CloseRegs, EvidenceNode::NegRegs, EvidenceNode::BorderProximity];

    pub fn name(self) -> &'static str {
        match self {
            EvidenceNode::Structure => "structure",
            EvidenceNode::CloseRegs => "close_regs",
            EvidenceNode::NegRegs => "neg_regs",
            EvidenceNode::BorderProximity => "border_proximity",
        }
    }

    pub fn states(self) -> Vec<&'static str> {
        match self {
            EvidenceNode::Structure => StructureClass::ALL.iter().map(|s| s.name()).collect(),
            EvidenceNode::CloseRegs | EvidenceNode::NegRegs => BOOL_STATES.to_vec(),
            EvidenceNode::BorderProximity => BorderProximity::ALL.iter().map(|s| s.name()).collect(),
        }
    }

    fn state_of(self, f: &PathFindings) -> usize {
        match self {
            EvidenceNode::Structure => StructureClass::ALL.iter().position(|&s| s == f.structure).unwrap(),
            EvidenceNode::CloseRegs => f.close_regs as usize,
            EvidenceNode::NegRegs => f.neg_regs as usize,
            EvidenceNode::BorderProximity => {
                BorderProximity::ALL.iter().position(|&b| b == f.border_proximity).unwrap()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelReason {
    #[error("malformed line")]
    Syntax,
    #[error("unknown section `{0}`")]
    UnknownSection(String),
    #[error("entry outside any section")]
    NoSection,
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("`{0}` is not a probability")]
    BadNumber(String),
    #[error("negative entry {0}")]
    Negative(f64),
    #[error("row `{row}` sums to {sum}")]
    RowSum { row: String, sum: f64 },
    #[error("missing entry `{0}`")]
    MissingEntry(String),
    #[error("p({structure}|{class}) must be 0: the structure rules the class out")]
    MissingStructuralZero { class: ErrorClass, structure: StructureClass },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("model line {line}: {reason}")]
pub struct ModelError {
    pub line: usize,
    pub reason: ModelReason,
}

/// Naive-Bayes PASTHELD model: class priors plus `p(finding | H)` for each
/// of the four evidence nodes. Rows are indexed by hypothesis (the four
/// classes, then NO_ERROR); boolean columns are `[false, true]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PastheldModel<T> {
    pub id: String,
    pub priors: [T; 4],
    pub structure: [[T; 6]; 5],
    pub close_regs: [[T; 2]; 5],
    pub neg_regs: [[T; 2]; 5],
    pub border: [[T; 3]; 5],
    /// When false the structural-zero audit is skipped. Only meaningful for
    /// baselines whose rows are deliberately identical across hypotheses.
    pub structural_zeros: bool,
}

pub const DEFAULT_MODEL_TEXT: &str = include_str!("../../../../models/pastheld-default.model");

impl<T: Probability> Default for PastheldModel<T> {
    fn default() -> Self {
        parse_model_text(DEFAULT_MODEL_TEXT, None).expect("shipped default model is valid")
    }
}

impl<T: Probability> PastheldModel<T> {
    fn row(&self, node: EvidenceNode, h: usize) -> &[T] {
        match node {
            EvidenceNode::Structure => &self.structure[h],
            EvidenceNode::CloseRegs => &self.close_regs[h],
            EvidenceNode::NegRegs => &self.neg_regs[h],
            EvidenceNode::BorderProximity => &self.border[h],
        }
    }

    fn row_mut(&mut self, node: EvidenceNode, h: usize) -> &mut [T] {
        match node {
            EvidenceNode::Structure => &mut self.structure[h],
            EvidenceNode::CloseRegs => &mut self.close_regs[h],
            EvidenceNode::NegRegs => &mut self.neg_regs[h],
            EvidenceNode::BorderProximity => &mut self.border[h],
        }
    }

    /// `p(findings | H = h)` with `h` indexing [`HYPOTHESES`].
    pub fn likelihood(&self, f: &PathFindings, h: usize) -> T {
        EvidenceNode::ALL.iter().fold(T::one(), |acc, &node| acc * self.row(node, h)[node.state_of(f)])
    }

    /// Checks priors, row sums and (unless disabled) structural zeros.
    pub fn validate(&self) -> Result<(), ModelReason> {
        let tol = T::tolerance(1e-9);
        check_row("priors", &self.priors, tol)?;
        for node in EvidenceNode::ALL {
            for (h, name) in HYPOTHESES.iter().enumerate() {
                check_row(&format!("{}|{}", node.name(), name), self.row(node, h), tol)?;
            }
        }
        if self.structural_zeros {
            for class in ErrorClass::ALL {
                for (k, s) in StructureClass::ALL.into_iter().enumerate() {
                    if !class.compatible_with(s) && self.structure[class.index()][k] != T::zero() {
                        return Err(ModelReason::MissingStructuralZero { class, structure: s });
                    }
                }
            }
        }
        Ok(())
    }

    /// The model as a belief network: H followed by the four evidence
    /// nodes. `p_error` is the prior mass on "this path harbours the
    /// error", spread over the classes by the class priors.
    pub fn network(&self, p_error: T) -> DiscreteNetwork<T> {
        let mut nodes = vec![NetworkNode::new("H", &HYPOTHESES)];
        let mut parents = vec![vec![]];
        let mut h_row: Vec<T> = self.priors.iter().map(|&p| p * p_error).collect();
        h_row.push(T::one() - p_error);
        let mut cpts = vec![h_row];
        for node in EvidenceNode::ALL {
            nodes.push(NetworkNode::new(node.name(), &node.states()));
            parents.push(vec![0]);
            cpts.push((0..HYPOTHESES.len()).flat_map(|h| self.row(node, h).to_vec()).collect());
        }
        DiscreteNetwork::new(nodes, parents, cpts).expect("validated model forms a valid network")
    }

    /// Observation vector for `infer_enumerate` on [`Self::network`].
    pub fn observations(&self, f: &PathFindings) -> Vec<(usize, usize)> {
        EvidenceNode::ALL.iter().enumerate().map(|(k, node)| (k + 1, node.state_of(f))).collect()
    }

    /// Renders the model in the file format; parsing the result gives back
    /// an equal model.
    pub fn to_model_text(&self) -> String {
        let mut out = String::new();
        let num = |v: T| v.to_f64().unwrap();
        let _ = writeln!(out, "[model]\nid = {}", self.id);
        if !self.structural_zeros {
            out.push_str("structural_zeros = false\n");
        }
        out.push_str("\n[priors]\n");
        for c in ErrorClass::ALL {
            let _ = writeln!(out, "{} = {}", c.name(), num(self.priors[c.index()]));
        }
        for node in EvidenceNode::ALL {
            let _ = writeln!(out, "\n[cpt.{}]", node.name());
            for (h, hname) in HYPOTHESES.iter().enumerate() {
                for (k, s) in node.states().iter().enumerate() {
                    let _ = writeln!(out, "p({s}|{hname}) = {}", num(self.row(node, h)[k]));
                }
            }
        }
        out
    }
}

fn check_row<T: Probability>(name: &str, row: &[T], tol: T) -> Result<(), ModelReason> {
    if let Some(&v) = row.iter().find(|v| !v.is_finite() || **v < T::zero()) {
        return Err(ModelReason::Negative(v.to_f64().unwrap_or(f64::NAN)));
    }
    let sum: T = row.iter().copied().sum();
    if (sum - T::one()).abs() > tol {
        return Err(ModelReason::RowSum { row: name.to_string(), sum: sum.to_f64().unwrap_or(f64::NAN) });
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Model,
    Priors,
    Cpt(EvidenceNode),
}

fn parse_section(name: &str) -> Option<Section> {
    match name {
        "model" => Some(Section::Model),
        "priors" => Some(Section::Priors),
        _ => {
            let node = name.strip_prefix("cpt.")?;
            EvidenceNode::ALL.into_iter().find(|n| n.name() == node).map(Section::Cpt)
        }
    }
}

/// `p(STATE|HYP)` → (state, hypothesis) names.
fn parse_row_key(key: &str) -> Option<(&str, &str)> {
    let inner = key.strip_prefix("p(")?.strip_suffix(')')?;
    let (s, h) = inner.split_once('|')?;
    Some((s.trim(), h.trim()))
}

fn parse_prob(v: &str) -> Result<f64, ModelReason> {
    let x: f64 = v.parse().map_err(|_| ModelReason::BadNumber(v.to_string()))?;
    if !x.is_finite() {
        return Err(ModelReason::BadNumber(v.to_string()));
    }
    if x < 0.0 {
        return Err(ModelReason::Negative(x));
    }
    Ok(x)
}

/// Parses a model file. Sections that are left out entirely fall back to
/// `base` (the shipped default model when `None`).
pub fn load_model<T: Probability>(text: &str) -> Result<PastheldModel<T>, ModelError> {
    parse_model_text(text, Some(PastheldModel::default()))
}

fn parse_model_text<T: Probability>(
    text: &str,
    base: Option<PastheldModel<T>>,
) -> Result<PastheldModel<T>, ModelError> {
    let err = |line, reason| ModelError { line, reason };
    let mut section: Option<Section> = None;
    let mut seen_sections: BTreeMap<String, usize> = BTreeMap::new();
    let mut id: Option<String> = None;
    let mut structural_zeros = true;
    let mut priors: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    let mut cpts: BTreeMap<(EvidenceNode, usize, usize), (f64, usize)> = BTreeMap::new();
    let mut last_line = 0;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        last_line = line;
        let body = raw.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            let s = parse_section(name).ok_or_else(|| err(line, ModelReason::UnknownSection(name.to_string())))?;
            if seen_sections.insert(name.to_string(), line).is_some() {
                return Err(err(line, ModelReason::DuplicateKey(format!("[{name}]"))));
            }
            section = Some(s);
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| err(line, ModelReason::Syntax))?;
        let (key, value) = (key.trim(), value.trim());
        let dup = || err(line, ModelReason::DuplicateKey(key.to_string()));
        match section.ok_or_else(|| err(line, ModelReason::NoSection))? {
            Section::Model => match key {
                "id" if id.is_none() => id = Some(value.to_string()),
                "id" => return Err(dup()),
                "structural_zeros" => {
                    structural_zeros =
                        value.parse().map_err(|_| err(line, ModelReason::BadNumber(value.to_string())))?
                }
                _ => return Err(err(line, ModelReason::UnknownKey(key.to_string()))),
            },
            Section::Priors => {
                let c: ErrorClass = key.parse().map_err(|_| err(line, ModelReason::UnknownKey(key.to_string())))?;
                let p = parse_prob(value).map_err(|r| err(line, r))?;
                if priors.insert(c.index(), (p, line)).is_some() {
                    return Err(dup());
                }
            }
            Section::Cpt(node) => {
                let unknown = || err(line, ModelReason::UnknownKey(key.to_string()));
                let (s, h) = parse_row_key(key).ok_or_else(unknown)?;
                let si = node.states().iter().position(|x| *x == s).ok_or_else(unknown)?;
                let hi = HYPOTHESES.iter().position(|x| *x == h).ok_or_else(unknown)?;
                let p = parse_prob(value).map_err(|r| err(line, r))?;
                if cpts.insert((node, hi, si), (p, line)).is_some() {
                    return Err(dup());
                }
            }
        }
    }

    let complete = base.is_none();
    let mut model = base.unwrap_or_else(|| PastheldModel {
        id: String::new(),
        priors: [T::zero(); 4],
        structure: [[T::zero(); 6]; 5],
        close_regs: [[T::zero(); 2]; 5],
        neg_regs: [[T::zero(); 2]; 5],
        border: [[T::zero(); 3]; 5],
        structural_zeros: true,
    });
    model.id = id.unwrap_or_else(|| "unnamed".to_string());
    model.structural_zeros = structural_zeros;

    let present = |name: &str| seen_sections.get(name).copied();
    let fill_line = |name: &str| if complete { last_line } else { present(name).unwrap_or(last_line) };
    if present("priors").is_some() || complete {
        let at = fill_line("priors");
        for c in ErrorClass::ALL {
            let (p, _) =
                priors.get(&c.index()).ok_or_else(|| err(at, ModelReason::MissingEntry(c.name().to_string())))?;
            model.priors[c.index()] = T::lit(*p);
        }
        check_row("priors", &model.priors, T::tolerance(1e-9)).map_err(|r| err(at, r))?;
    }
    for node in EvidenceNode::ALL {
        let sec = format!("cpt.{}", node.name());
        if present(&sec).is_none() && !complete {
            continue;
        }
        let at = fill_line(&sec);
        for (h, hname) in HYPOTHESES.iter().enumerate() {
            let mut row_line = at;
            for (k, s) in node.states().iter().enumerate() {
                let (p, l) = cpts
                    .get(&(node, h, k))
                    .ok_or_else(|| err(at, ModelReason::MissingEntry(format!("p({s}|{hname})"))))?;
                row_line = *l;
                model.row_mut(node, h)[k] = T::lit(*p);
            }
            check_row(&format!("{}|{}", node.name(), hname), model.row(node, h), T::tolerance(1e-9))
                .map_err(|r| err(row_line, r))?;
            if node == EvidenceNode::Structure && h < NO_ERROR && model.structural_zeros {
                let class = ErrorClass::ALL[h];
                for (k, s) in StructureClass::ALL.into_iter().enumerate() {
                    if !class.compatible_with(s) && model.structure[h][k] != T::zero() {
                        let l = cpts[&(node, h, k)].1;
                        return Err(err(l, ModelReason::MissingStructuralZero { class, structure: s }));
                    }
                }
            }
        }
    }
    model.validate().map_err(|r| err(last_line, r))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_model_loads_and_audits() {
        let m: PastheldModel<f64> = PastheldModel::default();
        assert!(m.validate().is_ok());
        for class in ErrorClass::ALL {
            for (k, s) in StructureClass::ALL.into_iter().enumerate() {
                if !class.compatible_with(s) {
                    assert_eq!(m.structure[class.index()][k], 0.0, "{class} {s}");
                }
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let m: PastheldModel<f64> = PastheldModel::default();
        let again: PastheldModel<f64> = load_model(&m.to_model_text()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn omitted_sections_fall_back_to_default() {
        let m: PastheldModel<f64> = load_model(
            "[model]\nid = tiny\n[priors]\nBAD_SET = 0.7\nBAD_ADJUST = 0.1\nENTERED_BAD = 0.1\nBAD_LOOP = 0.1\n",
        )
        .unwrap();
        let d: PastheldModel<f64> = PastheldModel::default();
        assert_eq!(m.id, "tiny");
        assert_eq!(m.priors[0], 0.7);
        assert_eq!(m.structure, d.structure);
    }

    #[test]
    fn row_sum_error_points_at_row() {
        let mut text = PastheldModel::<f64>::default().to_model_text();
        text = text.replace("p(true|BAD_SET) =", "p(true|BAD_SET) = 0.02 +");
        let e = load_model::<f64>(&text).unwrap_err();
        assert!(matches!(e.reason, ModelReason::BadNumber(_)), "{e}");

        let d = PastheldModel::<f64>::default();
        let mut m = d.clone();
        m.close_regs[0] = [0.5, 0.48];
        let text = m.to_model_text();
        let e = load_model::<f64>(&text).unwrap_err();
        assert!(matches!(e.reason, ModelReason::RowSum { .. }), "{e}");
        let line = text.lines().nth(e.line - 1).unwrap();
        assert!(line.starts_with("p(true|BAD_SET)"), "{line}");
    }

    #[test]
    fn structural_zero_is_enforced() {
        let mut m = PastheldModel::<f64>::default();
        let set = StructureClass::ALL.iter().position(|&s| s == StructureClass::SetFail).unwrap();
        let adj = StructureClass::ALL.iter().position(|&s| s == StructureClass::AdjustFail).unwrap();
        let row = &mut m.structure[ErrorClass::BadAdjust.index()];
        row[set] += 0.1;
        row[adj] -= 0.1;
        let e = load_model::<f64>(&m.to_model_text()).unwrap_err();
        assert_eq!(
            e.reason,
            ModelReason::MissingStructuralZero { class: ErrorClass::BadAdjust, structure: StructureClass::SetFail }
        );
    }

    #[test]
    fn rejects_unknown_keys() {
        for text in ["[model]\ncolour = red\n", "[cpt.weather]\n", "[priors]\nBAD_THING = 1\n", "id = x\n"] {
            assert!(load_model::<f64>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn f32_model() {
        let m: PastheldModel<f32> = PastheldModel::default();
        assert!(m.validate().is_ok());
    }
}
