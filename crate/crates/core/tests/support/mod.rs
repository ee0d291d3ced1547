#![allow(dead_code)]

use std::path::PathBuf;

use dumptriage::cfg::Cfg;
use dumptriage::diagnosis::{NetworkNode, NO_ERROR};
use dumptriage::evidence::{BorderProximity, StructureClass};
use dumptriage::harness::{gen_program, harness_memory, ExternalSlots};
use dumptriage::isa::{execute, DEFAULT_STEP_LIMIT};
use dumptriage::pathfinder::{collapse_trace, enumerate_paths, find_root_variable, prune_infeasible, DEFAULT_PATH_CAP};
use dumptriage::{DiscreteNetwork, ErrorClass, PastheldModel, PathFindings};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(repo_root().join("fixtures").join(name)).unwrap()
}

// ---------------------------------------------------------------- networks

pub struct RandomNet {
    pub states: Vec<usize>,
    pub parents: Vec<Vec<usize>>,
    pub cpts: Vec<Vec<f64>>,
}

/// A random acyclic network: up to 6 nodes, 1 to 4 states, up to 3 parents,
/// node indices shuffled so the topological order is not the index order.
pub fn random_net(rng: &mut ChaCha8Rng) -> RandomNet {
    let n = rng.random_range(1..=6);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let states: Vec<usize> = (0..n).map(|_| rng.random_range(1..=4)).collect();
    let mut parents = vec![Vec::new(); n];
    for k in 0..n {
        let node = perm[k];
        for &earlier in &perm[..k] {
            if parents[node].len() < 3 && rng.random_bool(0.4) {
                parents[node].push(earlier);
            }
        }
    }
    let cpts = (0..n)
        .map(|i| {
            let rows: usize = parents[i].iter().map(|&p| states[p]).product();
            (0..rows)
                .flat_map(|_| {
                    let mut row: Vec<f64> = (0..states[i])
                        .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random::<f64>() + 1e-3 })
                        .collect();
                    if row.iter().all(|&x| x == 0.0) {
                        row[0] = 1.0;
                    }
                    let s: f64 = row.iter().sum();
                    row.into_iter().map(move |x| x / s)
                })
                .collect()
        })
        .collect();
    RandomNet { states, parents, cpts }
}

impl RandomNet {
    pub fn build(&self) -> DiscreteNetwork<f64> {
        let names: Vec<String> = (0..self.states.len()).map(|i| format!("x{i}")).collect();
        let nodes = names
            .iter()
            .zip(&self.states)
            .map(|(name, &k)| {
                let st: Vec<String> = (0..k).map(|s| format!("s{s}")).collect();
                let refs: Vec<&str> = st.iter().map(String::as_str).collect();
                NetworkNode::new(name.clone(), &refs)
            })
            .collect();
        DiscreteNetwork::new(nodes, self.parents.clone(), self.cpts.clone()).unwrap()
    }

    pub fn random_observations(&self, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let mut obs = Vec::new();
        for (i, &k) in self.states.iter().enumerate() {
            if rng.random_bool(0.4) {
                obs.push((i, rng.random_range(0..k)));
            }
        }
        obs
    }

    /// Posterior marginals by tabulating the full joint distribution.
    /// Row layout: first parent most significant.
    pub fn joint_oracle(&self, obs: &[(usize, usize)]) -> Option<Vec<Vec<f64>>> {
        let n = self.states.len();
        let total: usize = self.states.iter().product();
        let mut marg: Vec<Vec<f64>> = self.states.iter().map(|&k| vec![0.0; k]).collect();
        let mut z = 0.0;
        let mut a = vec![0usize; n];
        for code in 0..total {
            let mut c = code;
            for i in 0..n {
                a[i] = c % self.states[i];
                c /= self.states[i];
            }
            if obs.iter().any(|&(i, s)| a[i] != s) {
                continue;
            }
            let mut p = 1.0;
            for i in 0..n {
                let mut row = 0;
                for &q in &self.parents[i] {
                    row = row * self.states[q] + a[q];
                }
                p *= self.cpts[i][row * self.states[i] + a[i]];
            }
            z += p;
            for i in 0..n {
                marg[i][a[i]] += p;
            }
        }
        (z > 0.0).then(|| marg.into_iter().map(|m| m.into_iter().map(|x| x / z).collect()).collect())
    }
}

// ------------------------------------------------------------------ scoring

pub fn structure_idx(s: StructureClass) -> usize {
    StructureClass::ALL.iter().position(|&x| x == s).unwrap()
}

pub fn border_idx(b: BorderProximity) -> usize {
    BorderProximity::ALL.iter().position(|&x| x == b).unwrap()
}

pub fn raw_likelihood(m: &PastheldModel<f64>, f: &PathFindings, h: usize) -> f64 {
    m.structure[h][structure_idx(f.structure)]
        * m.close_regs[h][f.close_regs as usize]
        * m.neg_regs[h][f.neg_regs as usize]
        * m.border[h][border_idx(f.border_proximity)]
}

/// Joint posterior over all `n × 4` single-fault hypotheses, computed
/// straight from the definition (no ratio trick).
pub fn score_oracle(m: &PastheldModel<f64>, findings: &[PathFindings]) -> Option<Vec<[f64; 4]>> {
    let n = findings.len();
    let mut w = vec![[0.0; 4]; n];
    for i in 0..n {
        for c in ErrorClass::ALL {
            let mut p = m.priors[c.index()] / n as f64 * raw_likelihood(m, &findings[i], c.index());
            for (j, f) in findings.iter().enumerate() {
                if j != i {
                    p *= raw_likelihood(m, f, NO_ERROR);
                }
            }
            w[i][c.index()] = p;
        }
    }
    let z: f64 = w.iter().flatten().sum();
    (z > 0.0).then(|| w.into_iter().map(|r| r.map(|x| x / z)).collect())
}

pub fn random_findings(rng: &mut ChaCha8Rng) -> PathFindings {
    PathFindings {
        structure: StructureClass::ALL[rng.random_range(0..6)],
        close_regs: rng.random_bool(0.5),
        neg_regs: rng.random_bool(0.5),
        border_proximity: BorderProximity::ALL[rng.random_range(0..3)],
    }
}

fn random_row<const K: usize>(rng: &mut ChaCha8Rng, allowed: impl Fn(usize) -> bool) -> [f64; K] {
    let mut row = [0.0; K];
    for (i, x) in row.iter_mut().enumerate() {
        if allowed(i) {
            *x = rng.random::<f64>() + 0.01;
        }
    }
    let s: f64 = row.iter().sum();
    row.map(|x| x / s)
}

/// A random model that honours every structural zero.
pub fn random_model(rng: &mut ChaCha8Rng) -> PastheldModel<f64> {
    let mut m = PastheldModel::<f64>::default();
    m.priors = random_row(rng, |_| true);
    for h in 0..5 {
        m.structure[h] =
            random_row(rng, |s| h == NO_ERROR || ErrorClass::ALL[h].compatible_with(StructureClass::ALL[s]));
        m.close_regs[h] = random_row(rng, |_| true);
        m.neg_regs[h] = random_row(rng, |_| true);
        m.border[h] = random_row(rng, |_| true);
    }
    m.validate().unwrap();
    m
}

/// A model whose evidence rows are identical across hypotheses.
pub fn uninformative_model(rng: &mut ChaCha8Rng) -> PastheldModel<f64> {
    let mut m = random_model(rng);
    m.structural_zeros = false;
    let (s, c, n, b) = (m.structure[NO_ERROR], m.close_regs[NO_ERROR], m.neg_regs[NO_ERROR], m.border[NO_ERROR]);
    for h in 0..5 {
        m.structure[h] = s;
        m.close_regs[h] = c;
        m.neg_regs[h] = n;
        m.border[h] = b;
    }
    m
}

// -------------------------------------------------------------- soundness

#[derive(Debug, Default)]
pub struct Sweep {
    pub programs: usize,
    pub executions: usize,
    pub faulting: usize,
    /// Faulting runs whose collapsed route is not among the survivors.
    pub missing: Vec<String>,
    /// Faulting runs whose collapsed route was pruned.
    pub wrongly_pruned: Vec<String>,
    pub exhaustive_programs: usize,
}

/// Runs every program `gen_program(seed, size)` for the given seeds and
/// sizes over its external grid (exhaustively when the grid has at most
/// `grid_cap` points, sampled otherwise) and checks each faulting run
/// against the pathfinder.
pub fn soundness_sweep(seeds: std::ops::Range<u64>, sizes: &[usize], grid_cap: usize) -> Sweep {
    use rayon::prelude::*;
    let jobs: Vec<(u64, usize)> = seeds.flat_map(|s| sizes.iter().map(move |&z| (s, z))).collect();
    let parts: Vec<Sweep> = jobs
        .par_iter()
        .map(|&(seed, size)| {
            let mut sw = Sweep { programs: 1, ..Sweep::default() };
            let program = gen_program(seed, size);
            let cfg = Cfg::from_program(&program);
            let slots = ExternalSlots::of(&program);
            let grid = if slots.grid_size() <= grid_cap {
                sw.exhaustive_programs = 1;
                slots.exhaustive()
            } else {
                slots.sample(grid_cap, &mut ChaCha8Rng::seed_from_u64(seed))
            };
            let memory = harness_memory();
            for ext in grid {
                sw.executions += 1;
                let trace = execute(&program, &ext, &memory, DEFAULT_STEP_LIMIT).unwrap();
                let Some(Ok(dump)) = trace.to_dump(&program, &memory) else { continue };
                sw.faulting += 1;
                let root = find_root_variable(&dump).unwrap();
                let truth = collapse_trace(&program, &cfg, &trace, &root.name).unwrap();
                let all = enumerate_paths(&cfg, &dump, &root, DEFAULT_PATH_CAP);
                assert!(!all.truncated, "seed {seed} size {size}: enumeration truncated");
                let kept = prune_infeasible(all.clone(), &dump, &cfg, &root);
                let tag = || format!("seed {seed} size {size} externals {ext:?}: {truth}");
                if !kept.paths.iter().any(|p| p.same_route(&truth)) {
                    if all.paths.iter().any(|p| p.same_route(&truth)) {
                        sw.wrongly_pruned.push(tag());
                    } else {
                        sw.missing.push(tag());
                    }
                }
            }
            sw
        })
        .collect();
    parts.into_iter().fold(Sweep::default(), |mut acc, s| {
        acc.programs += s.programs;
        acc.executions += s.executions;
        acc.faulting += s.faulting;
        acc.exhaustive_programs += s.exhaustive_programs;
        acc.missing.extend(s.missing);
        acc.wrongly_pruned.extend(s.wrongly_pruned);
        acc
    })
}

// ----------------------------------------------------------------- goldens

/// Every byte-stable artifact, keyed by its file name under
/// `fixtures/golden/`.
pub fn golden_outputs() -> Vec<(&'static str, String)> {
    use dumptriage::cfg::emit_dot;
    use dumptriage::report::{render_json, render_text, ReportOptions};
    use dumptriage::{analyze, load_model, parse_dump, AnalyzeOptions};

    let opts = AnalyzeOptions::default();
    let default_model = PastheldModel::<f64>::default();
    let ten_path_model: PastheldModel<f64> = load_model(&fixture("ten-path.model")).unwrap();
    let two_loop = parse_dump(&fixture("two-loop.dump")).unwrap();
    let ten_path = parse_dump(&fixture("ten-path.dump")).unwrap();
    let a2 = analyze(&two_loop, &default_model, &opts).unwrap();
    let a5 = analyze(&ten_path, &ten_path_model, &opts).unwrap();
    let top = |a: &dumptriage::Analysis<f64>, k: usize| -> Vec<_> {
        a.diagnosis.ranking.iter().take(k).map(|&i| a.paths.paths[i].clone()).collect()
    };
    vec![
        ("two-loop.dump", two_loop.to_string()),
        ("ten-path.dump", ten_path.to_string()),
        ("default.model", default_model.to_model_text()),
        ("two-loop.txt", render_text(&a2, &default_model, &opts, &ReportOptions::default())),
        ("two-loop.json", render_json(&a2, &default_model, &opts)),
        ("two-loop.dot", emit_dot(&a2.cfg, None).unwrap()),
        ("two-loop-top1.dot", emit_dot(&a2.cfg, Some(&top(&a2, 1))).unwrap()),
        ("ten-path.txt", render_text(&a5, &ten_path_model, &opts, &ReportOptions::default())),
        ("ten-path-expanded.txt", render_text(&a5, &ten_path_model, &opts, &ReportOptions { expand_all: true })),
        ("ten-path.json", render_json(&a5, &ten_path_model, &opts)),
        ("ten-path-top3.dot", emit_dot(&a5.cfg, Some(&top(&a5, 3))).unwrap()),
    ]
}

pub fn golden_path(name: &str) -> PathBuf {
    repo_root().join("fixtures/golden").join(name)
}
