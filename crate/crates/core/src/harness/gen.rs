use std::collections::BTreeMap;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::isa::{AdjustOp, BranchCond, MemoryBlock, MemoryMap, Op, Operand, Program};

/// Legal strip `[4096, 4896)` followed by a protected block.
pub const LEGAL_BASE: i64 = 4096;
pub const LEGAL_LEN: i64 = 800;
pub const LEGAL_END: i64 = LEGAL_BASE + LEGAL_LEN;

pub fn harness_memory() -> MemoryMap {
    MemoryMap::new(vec![
        MemoryBlock::legal(LEGAL_BASE as u64, LEGAL_LEN as u64),
        MemoryBlock::protected(LEGAL_END as u64, 4096),
    ])
    .expect("disjoint blocks")
}

/// What a generated variable is used for, read off its first letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    /// `p*`: an address, possibly set in the program.
    Address,
    /// `q*`: an address that only ever arrives from outside the segment.
    Entered,
    /// `n*`: a loop counter.
    Counter,
    /// `c*`: a branch selector.
    Selector,
    /// Anything else (`t`).
    Scratch,
}

impl Role {
    pub fn of(var: &str) -> Role {
        match var.as_bytes().first() {
            Some(b'p') => Role::Address,
            Some(b'q') => Role::Entered,
            Some(b'n') => Role::Counter,
            Some(b'c') => Role::Selector,
            _ => Role::Scratch,
        }
    }

    /// Values tried for an external of this role.
    pub fn grid(self) -> &'static [i64] {
        const ADDRESSES: [i64; 5] = [LEGAL_BASE, LEGAL_END - 8, LEGAL_END + 80, 0, -1];
        match self {
            Role::Address | Role::Entered => &ADDRESSES,
            Role::Counter => &[0, 1, 2, 11],
            Role::Selector => &[0, 1],
            Role::Scratch => &[0],
        }
    }
}

struct Builder {
    items: Vec<(Option<String>, Op)>,
    pending: Option<String>,
    alias: BTreeMap<String, String>,
    labels: usize,
}

impl Builder {
    fn push(&mut self, op: Op) {
        let label = self.pending.take();
        self.items.push((label, op));
    }

    fn fresh(&mut self) -> String {
        self.labels += 1;
        format!("L{}", self.labels)
    }

    /// Binds `label` to the next instruction pushed. A second label at the
    /// same spot becomes an alias of the first.
    fn place(&mut self, label: String) {
        match &self.pending {
            Some(p) => {
                self.alias.insert(label, p.clone());
            }
            None => self.pending = Some(label),
        }
    }

    fn finish(self) -> Program {
        let alias = self.alias;
        let resolve = |t: &String| {
            let mut t = t.clone();
            while let Some(a) = alias.get(&t) {
                t = a.clone();
            }
            t
        };
        let items = self
            .items
            .into_iter()
            .map(|(l, op)| {
                let op = match op {
                    Op::Jmp { target } => Op::Jmp { target: resolve(&target) },
                    Op::Branch { cond, var, target } => Op::Branch { cond, var, target: resolve(&target) },
                    other => other,
                };
                (l, op)
            })
            .collect();
        Program::new(items).expect("generator emits valid programs")
    }
}

struct Gen {
    rng: ChaCha8Rng,
    b: Builder,
    addrs: Vec<String>,
    settable: Vec<String>,
    selectors: Vec<String>,
    counters: usize,
}

fn var(s: &str) -> String {
    s.to_string()
}

impl Gen {
    fn pick(&mut self, from: &[String]) -> String {
        from[self.rng.random_range(0..from.len())].clone()
    }

    fn legal_imm(&mut self) -> i64 {
        LEGAL_BASE + 8 * self.rng.random_range(0..LEGAL_LEN / 8)
    }

    fn simple(&mut self) {
        let addrs = self.addrs.clone();
        let roll = self.rng.random_range(0..100);
        if roll < 35 {
            let dst = self.pick(&addrs);
            let (op, step) = if self.rng.random_bool(0.8) {
                (AdjustOp::Add, [8, 16, 40, 80][self.rng.random_range(0..4)])
            } else {
                (AdjustOp::Sub, 8)
            };
            self.b.push(Op::Adjust { op, dst, src: Operand::Imm(step) });
        } else if roll < 60 {
            let settable = self.settable.clone();
            let dst = self.pick(&settable);
            let v = self.legal_imm();
            self.b.push(Op::Set { dst, src: Operand::Imm(v) });
        } else if roll < 88 {
            let base = self.pick(&addrs);
            let op = match self.rng.random_range(0..3) {
                0 => Op::Load { dst: var("t"), base, offset: 0 },
                1 => Op::Store { base, offset: 0, src: var("t") },
                _ => Op::Print { var: base },
            };
            self.b.push(op);
        } else {
            let v = self.rng.random_range(-4..64);
            self.b.push(Op::Set { dst: var("t"), src: Operand::Imm(v) });
        }
    }

    /// `BRZ c, else; then..; JMP end; else: else..; end:`
    fn diamond(&mut self, budget: usize) {
        let inner = budget - 2;
        let then_len = self.rng.random_range(1..=inner.min(3));
        let else_len = self.rng.random_range(0..=(inner - then_len).min(3));
        let selectors = self.selectors.clone();
        let c = self.pick(&selectors);
        let (l_else, l_end) = (self.b.fresh(), self.b.fresh());
        self.b.push(Op::Branch { cond: BranchCond::Zero, var: c, target: l_else.clone() });
        for _ in 0..then_len {
            self.simple();
        }
        self.b.push(Op::Jmp { target: l_end.clone() });
        self.b.place(l_else);
        for _ in 0..else_len {
            self.simple();
        }
        self.b.place(l_end);
    }

    /// Guarded down-counting loop around an adjust of an address:
    /// `SET n, k; BRZ n, exit; head: ADD p, s; [deref]; SUB n, 1; BRNZ n, head; exit:`
    fn counted_loop(&mut self, budget: usize) {
        let n = format!("n{}", self.counters);
        self.counters += 1;
        if self.rng.random_bool(0.7) {
            let k = self.rng.random_range(1..=4);
            self.b.push(Op::Set { dst: n.clone(), src: Operand::Imm(k) });
        } else {
            self.b.push(Op::SetX { dst: n.clone() });
        }
        let (head, exit) = (self.b.fresh(), self.b.fresh());
        self.b.push(Op::Branch { cond: BranchCond::Zero, var: n.clone(), target: exit.clone() });
        let addrs = self.addrs.clone();
        let p = self.pick(&addrs);
        self.b.place(head.clone());
        let step = [8, 16, 40, 80][self.rng.random_range(0..4)];
        self.b.push(Op::Adjust { op: AdjustOp::Add, dst: p.clone(), src: Operand::Imm(step) });
        if budget > 5 && self.rng.random_bool(0.5) {
            self.b.push(Op::Load { dst: var("t"), base: p, offset: 0 });
        }
        self.b.push(Op::Adjust { op: AdjustOp::Sub, dst: n.clone(), src: Operand::Imm(1) });
        self.b.push(Op::Branch { cond: BranchCond::NonZero, var: n, target: head });
        self.b.place(exit);
    }

    fn segment(&mut self, remaining: usize, force_branch: bool) -> usize {
        let before = self.b.items.len();
        let roll = self.rng.random_range(0..100);
        if remaining >= 5 && (roll < 25 || (force_branch && roll < 60)) {
            let budget = remaining.min(6);
            self.counted_loop(budget);
        } else if remaining >= 3 && !self.selectors.is_empty() && (roll < 50 || force_branch) {
            let budget = remaining.min(8);
            self.diamond(budget);
        } else {
            self.simple();
        }
        self.b.items.len() - before
    }
}

/// A random program of exactly `size` instructions (`size >= 4`).
///
/// Every program starts with `SETX p0` and ends with a dereference
/// followed by `HALT`; larger ones add selectors, a second address,
/// an address that is never assigned (`q0`), diamonds and counted loops.
pub fn gen_program(seed: u64, size: usize) -> Program {
    assert!(size >= 4, "programs need at least 4 instructions");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let with_q = size >= 8 && rng.random_bool(0.5);
    let mut g = Gen {
        rng,
        b: Builder { items: Vec::new(), pending: None, alias: BTreeMap::new(), labels: 0 },
        addrs: vec![var("p0")],
        settable: vec![var("p0")],
        selectors: Vec::new(),
        counters: 0,
    };
    g.b.push(Op::SetX { dst: var("p0") });
    if size >= 7 {
        g.b.push(Op::SetX { dst: var("c0") });
        g.selectors.push(var("c0"));
    }
    if size >= 12 {
        let v = g.legal_imm();
        g.b.push(Op::Set { dst: var("p1"), src: Operand::Imm(v) });
        g.addrs.push(var("p1"));
        g.settable.push(var("p1"));
    }
    if size >= 16 {
        g.b.push(Op::SetX { dst: var("c1") });
        g.selectors.push(var("c1"));
    }
    if with_q {
        g.addrs.push(var("q0"));
    }
    let body_end = size - 2;
    let mut branched = g.selectors.is_empty();
    while g.b.items.len() < body_end {
        let remaining = body_end - g.b.items.len();
        let used_before = g.b.items.len();
        g.segment(remaining, !branched);
        branched |= g.b.items[used_before..].iter().any(|(_, op)| matches!(op, Op::Branch { .. }));
    }
    let addrs = g.addrs.clone();
    let base = g.pick(&addrs);
    g.b.push(Op::Load { dst: var("t"), base, offset: 0 });
    g.b.push(Op::Halt);
    g.b.finish()
}
