//! Text and JSON renderings of an [`Analysis`].
//!
//! Paths are shown to people numbered from 1 (`PATH 1` is path id 0);
//! the JSON form keeps the 0-based ids.

use std::fmt::Write as _;

use serde::Serialize;

use crate::diagnosis::{ErrorClass, PastheldModel, PathDiagnosis};
use crate::evidence::PathFindings;
use crate::pipeline::{Analysis, AnalyzeOptions};
use crate::scalar::Probability;

/// Paths at or above this posterior get the full breakdown in text mode.
pub const DETAIL_THRESHOLD: f64 = 0.10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    pub expand_all: bool,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// Two decimals without the leading zero, as in ".08".
fn compact(p: f64) -> String {
    let s = format!("{p:.2}");
    s.strip_prefix('0').map(str::to_string).unwrap_or(s)
}

fn f64_of<T: Probability>(v: T) -> f64 {
    v.to_f64().unwrap()
}

pub fn render_text<T: Probability>(
    a: &Analysis<T>,
    model: &PastheldModel<T>,
    opts: &AnalyzeOptions,
    report: &ReportOptions,
) -> String {
    let d = &a.diagnosis;
    let mut out = String::new();
    let _ = writeln!(out, "PASTHELD ANALYSIS");
    let _ = writeln!(
        out,
        "root variable: {} = {} ({:+} bytes from the nearest legal block end)",
        a.root.name, a.root.value, a.root.overshoot
    );
    let _ = writeln!(
        out,
        "feasible paths: {} ({} enumerated, prior {:.2} each)",
        d.n_paths(),
        a.enumerated,
        1.0 / d.n_paths() as f64
    );
    let _ = writeln!(out, "model: {}", model.id);
    let _ = writeln!(
        out,
        "config: close_threshold={} neg_threshold={} near_end_window={} path_cap={}",
        opts.evidence.close_threshold, opts.evidence.neg_threshold, opts.evidence.near_end_window, opts.path_cap
    );
    if d.truncated {
        let _ =
            writeln!(out, "WARNING: path enumeration stopped at the cap of {}; the list is incomplete", opts.path_cap);
    }
    out.push('\n');
    for (rank, p) in d.ranked().enumerate() {
        let post = f64_of(p.posterior);
        let expand = report.expand_all || rank == 0 || post >= DETAIL_THRESHOLD;
        if expand {
            expanded(&mut out, a, p);
        } else {
            let _ = writeln!(out, "• PATH {}: p (ERROR) = {}", p.id + 1, compact(post));
        }
    }
    out
}

fn expanded<T: Probability>(out: &mut String, a: &Analysis<T>, p: &PathDiagnosis<T>) {
    let path = &a.paths.paths[p.id];
    let f = &p.findings;
    let _ = writeln!(out, "• PATH {}", p.id + 1);
    let _ = writeln!(out, "    route: {} (from instruction {} to {})", path, path.start_instr, path.end_instr);
    let _ = writeln!(out, "  PATH FINDINGS");
    let _ = writeln!(out, "    > SYNTACTIC STRUCTURE: {}", f.structure.title());
    let _ = writeln!(out, "    > NEG REGS: {}", yes_no(f.neg_regs));
    let _ = writeln!(out, "    > CLOSE REGS: {}", yes_no(f.close_regs));
    let _ = writeln!(out, "    > BORDER PROXIMITY: {}", f.border_proximity.title());
    let _ = writeln!(out, "  PATH FAILURE PROBABILITY");
    let _ = writeln!(out, "    p (ERROR ON PATH {}): {:.2}", p.id + 1, f64_of(p.posterior));
    let _ = writeln!(out, "  ERROR BREAKDOWN");
    for c in ErrorClass::ALL {
        let v = f64_of(p.class(c));
        if v > 0.0 {
            let _ = writeln!(out, "    > {}: {:.2}", c.label(), v);
        }
    }
}

#[derive(Serialize)]
struct JsonFindings {
    structure: &'static str,
    close_regs: bool,
    neg_regs: bool,
    border_proximity: &'static str,
}

impl From<&PathFindings> for JsonFindings {
    fn from(f: &PathFindings) -> Self {
        JsonFindings {
            structure: f.structure.name(),
            close_regs: f.close_regs,
            neg_regs: f.neg_regs,
            border_proximity: f.border_proximity.name(),
        }
    }
}

#[allow(non_snake_case)]
#[derive(Serialize)]
struct JsonBreakdown {
    BAD_SET: f64,
    BAD_ADJUST: f64,
    ENTERED_BAD: f64,
    BAD_LOOP: f64,
}

#[derive(Serialize)]
struct JsonPath {
    id: usize,
    posterior: f64,
    findings: JsonFindings,
    breakdown: JsonBreakdown,
}

#[derive(Serialize)]
struct JsonConfig {
    close_threshold: u64,
    neg_threshold: i64,
    near_end_window: u64,
    path_cap: usize,
}

#[derive(Serialize)]
struct JsonReport {
    n_paths: usize,
    truncated: bool,
    paths: Vec<JsonPath>,
    model_id: String,
    config: JsonConfig,
}

/// Machine-readable report at full precision. Paths appear in ranking order.
pub fn render_json<T: Probability>(a: &Analysis<T>, model: &PastheldModel<T>, opts: &AnalyzeOptions) -> String {
    let d = &a.diagnosis;
    let report = JsonReport {
        n_paths: d.n_paths(),
        truncated: d.truncated,
        paths: d
            .ranked()
            .map(|p| JsonPath {
                id: p.id,
                posterior: f64_of(p.posterior),
                findings: (&p.findings).into(),
                breakdown: JsonBreakdown {
                    BAD_SET: f64_of(p.class(ErrorClass::BadSet)),
                    BAD_ADJUST: f64_of(p.class(ErrorClass::BadAdjust)),
                    ENTERED_BAD: f64_of(p.class(ErrorClass::EnteredBad)),
                    BAD_LOOP: f64_of(p.class(ErrorClass::BadLoop)),
                },
            })
            .collect(),
        model_id: model.id.clone(),
        config: JsonConfig {
            close_threshold: opts.evidence.close_threshold,
            neg_threshold: opts.evidence.neg_threshold,
            near_end_window: opts.evidence.near_end_window,
            path_cap: opts.path_cap,
        },
    };
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::parse_dump;
    use crate::pipeline::analyze;

    #[test]
    fn two_loop_text_lists_two_paths() {
        let dump = parse_dump(include_str!("../../../fixtures/two-loop.dump")).unwrap();
        let model = PastheldModel::<f64>::default();
        let opts = AnalyzeOptions::default();
        let a = analyze(&dump, &model, &opts).unwrap();
        let text = render_text(&a, &model, &opts, &ReportOptions::default());
        assert!(text.contains("feasible paths: 2"));
        assert_eq!(text.matches("• PATH ").count(), 2);
        let json: serde_json::Value = serde_json::from_str(&render_json(&a, &model, &opts)).unwrap();
        assert_eq!(json["n_paths"], 2);
        let total: f64 = json["paths"].as_array().unwrap().iter().map(|p| p["posterior"].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compact_probabilities() {
        assert_eq!(compact(0.08), ".08");
        assert_eq!(compact(0.004), ".00");
        assert_eq!(compact(1.0), "1.00");
    }
}
