//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use proofloop::agent::Ablation;
use proofloop::bench::{CaseReport, Counts};
use proofloop::elab::sim::Simulator;
use proofloop::rtl::ast::{BinaryOp, Expr, LitForm, UnaryOp};
use proofloop::solver::prove::{reset_plan, simulate};
use proofloop::solver::sva::{ImplKind, Sequence};
use proofloop::solver::{parse_property, PropertyAst};
use proofloop::Design;

pub fn design(text: &str, top: &str) -> Design {
    Design::from_text(text, top).unwrap_or_else(|e| panic!("fixture does not elaborate: {e}"))
}

pub const TOGGLE: &str = "module toggle(input logic clk, input logic rst, output logic q);
  always_ff @(posedge clk) begin
    if (rst) q <= 1'b0;
    else q <= ~q;
  end
endmodule
";

pub fn corpus_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus_design(case: &str) -> Design {
    let dir = corpus_dir().join(case);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("case.json")).unwrap()).unwrap();
    Design::load(&dir.join("design"), manifest["top"].as_str().unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// Naive property semantics over a finite sampled trace.

fn mask(w: u32) -> u64 {
    if w >= 64 {
        u64::MAX
    } else {
        (1u64 << w) - 1
    }
}

/// Sampled values by signal name, one map per cycle.
pub struct Trace<'d> {
    pub design: &'d Design,
    pub samples: Vec<Vec<u64>>,
}

impl Trace<'_> {
    fn len(&self) -> usize {
        self.samples.len()
    }

    /// `(value, width)` of `e` at cycle `t`; cycles before 0 read as 0.
    pub fn eval(&self, e: &Expr, t: i64) -> (u64, u32) {
        let flat = &self.design.flat;
        match e {
            Expr::Ident { name, .. } => {
                let s = flat.signal(name).unwrap_or_else(|| panic!("oracle: unknown signal {name}"));
                let v = if t < 0 { 0 } else { self.samples[t as usize][s.slot] };
                (v, s.width)
            }
            Expr::Literal(l) => match l.form {
                LitForm::Fill(true) => (u64::MAX, 64),
                LitForm::Fill(false) => (0, 1),
                _ => (l.value, l.width.unwrap_or(32)),
            },
            Expr::Index { base, index } => {
                let (i, _) = self.eval(index, t);
                if let Expr::Ident { name, .. } = &**base {
                    let s = flat.signal(name).unwrap();
                    if s.array.is_some() {
                        let slot = s.element_slot(i as i64).expect("oracle: element in range");
                        let v = if t < 0 { 0 } else { self.samples[t as usize][slot] };
                        return (v, s.width);
                    }
                    let p = s.bit_position(i as i64).expect("oracle: bit in range");
                    let (v, _) = self.eval(base, t);
                    return ((v >> p) & 1, 1);
                }
                let (v, _) = self.eval(base, t);
                ((v >> i) & 1, 1)
            }
            Expr::Unary { op, operand } => {
                let (v, w) = self.eval(operand, t);
                let m = mask(w);
                match op {
                    UnaryOp::Not => (u64::from(v == 0), 1),
                    UnaryOp::BitNot => (!v & m, w),
                    UnaryOp::Neg => (v.wrapping_neg() & m, w),
                    UnaryOp::Plus => (v, w),
                    UnaryOp::RedAnd => (u64::from(v & m == m), 1),
                    UnaryOp::RedOr => (u64::from(v != 0), 1),
                    UnaryOp::RedXor => (u64::from(v.count_ones() % 2), 1),
                    UnaryOp::RedNand => (u64::from(v & m != m), 1),
                    UnaryOp::RedNor => (u64::from(v == 0), 1),
                    UnaryOp::RedXnor => (u64::from(v.count_ones() % 2 == 0), 1),
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let (a, wa) = self.eval(lhs, t);
                let (b, wb) = self.eval(rhs, t);
                let w = wa.max(wb);
                let m = mask(w);
                use BinaryOp::*;
                match op {
                    Add => (a.wrapping_add(b) & m, w),
                    Sub => (a.wrapping_sub(b) & m, w),
                    Mul => (a.wrapping_mul(b) & m, w),
                    BitAnd => (a & b, w),
                    BitOr => (a | b, w),
                    BitXor => (a ^ b, w),
                    Eq | CaseEq => (u64::from(a == b), 1),
                    Ne | CaseNe => (u64::from(a != b), 1),
                    Lt => (u64::from(a < b), 1),
                    Le => (u64::from(a <= b), 1),
                    Gt => (u64::from(a > b), 1),
                    Ge => (u64::from(a >= b), 1),
                    LogAnd => (u64::from(a != 0 && b != 0), 1),
                    LogOr => (u64::from(a != 0 || b != 0), 1),
                    other => panic!("oracle: operator {other:?} not supported"),
                }
            }
            Expr::Ternary { cond, then, els } => {
                if self.eval(cond, t).0 != 0 {
                    self.eval(then, t)
                } else {
                    self.eval(els, t)
                }
            }
            Expr::Concat(items) => {
                let mut v = 0u64;
                let mut w = 0u32;
                for it in items {
                    let (x, xw) = self.eval(it, t);
                    v = (v << xw) | (x & mask(xw));
                    w += xw;
                }
                (v, w)
            }
            Expr::Call { name, args } => {
                let (cur, w) = self.eval(&args[0], t);
                match name.as_str() {
                    "$past" => {
                        let n = args.get(1).map_or(1, |d| self.eval(d, t).0 as i64);
                        if t - n < 0 {
                            (0, w)
                        } else {
                            self.eval(&args[0], t - n)
                        }
                    }
                    "$rose" | "$fell" | "$stable" => {
                        let prev = if t < 1 { 0 } else { self.eval(&args[0], t - 1).0 };
                        let r = match name.as_str() {
                            "$rose" => cur & 1 == 1 && prev & 1 == 0,
                            "$fell" => cur & 1 == 0 && prev & 1 == 1,
                            _ => cur & mask(w) == prev & mask(w),
                        };
                        (u64::from(r), 1)
                    }
                    "$onehot" => (u64::from((cur & mask(w)).count_ones() == 1), 1),
                    "$onehot0" => (u64::from((cur & mask(w)).count_ones() <= 1), 1),
                    "$countones" => (u64::from((cur & mask(w)).count_ones()), 32),
                    other => panic!("oracle: {other} not supported"),
                }
            }
            other => panic!("oracle: expression {other:?} not supported"),
        }
    }

    fn holds(&self, e: &Expr, t: usize) -> bool {
        self.eval(e, t as i64).0 != 0
    }
}

/// Cycles at which `seq` started at `start` completes, and whether some
/// branch runs past the end of the trace.
fn seq_ends(tr: &Trace, seq: &Sequence, start: usize) -> (Vec<usize>, Vec<usize>, bool) {
    // (ends, death cycles of failing branches, pending)
    let mut ends = Vec::new();
    let mut deaths = Vec::new();
    let mut pending = false;
    fn go(tr: &Trace, seq: &Sequence, k: usize, base: usize, ends: &mut Vec<usize>, deaths: &mut Vec<usize>, pending: &mut bool) {
        let (lo, hi) = seq.steps[k].delay;
        for d in lo..=hi {
            let t = base + d as usize;
            if t >= tr.len() {
                *pending = true;
                continue;
            }
            if tr.holds(&seq.steps[k].expr, t) {
                if k + 1 == seq.steps.len() {
                    ends.push(t);
                } else {
                    go(tr, seq, k + 1, t, ends, deaths, pending);
                }
            } else {
                deaths.push(t);
            }
        }
    }
    go(tr, seq, 0, start, &mut ends, &mut deaths, &mut pending);
    (ends, deaths, pending)
}

/// Earliest cycle at which the property is violated on this trace.
pub fn first_violation(tr: &Trace, p: &PropertyAst) -> Option<usize> {
    let mut best: Option<usize> = None;
    let disabled_in = |from: usize, to: usize| p.disable_iff.as_ref().is_some_and(|d| (from..=to).any(|t| tr.holds(d, t)));
    for i in 0..tr.len() {
        let triggers: Vec<usize> = match &p.antecedent {
            None => vec![i],
            Some(a) => seq_ends(tr, a, i).0.into_iter().map(|e| if p.kind == ImplKind::NonOverlapped { e + 1 } else { e }).collect(),
        };
        for cs in triggers {
            if cs >= tr.len() {
                continue;
            }
            let (ends, deaths, pending) = seq_ends(tr, &p.consequent, cs);
            if !ends.is_empty() || pending {
                continue;
            }
            let v = deaths.into_iter().max().expect("a failed sequence has a failing branch");
            if !disabled_in(i, v) && best.is_none_or(|b| v < b) {
                best = Some(v);
            }
        }
    }
    best
}

/// True when some attempt's antecedent completes on this trace.
pub fn antecedent_fires(tr: &Trace, p: &PropertyAst) -> bool {
    match &p.antecedent {
        None => true,
        Some(a) => (0..tr.len()).any(|i| !seq_ends(tr, a, i).0.is_empty()),
    }
}

/// Exhaustive enumeration of every input sequence of length `depth` from
/// the reset state. Returns the minimal violating cycle over all sequences,
/// if any, and whether any sequence fires the antecedent.
pub fn enumerate(d: &Design, property: &str, depth: usize) -> (Option<usize>, bool) {
    let p = parse_property(property).expect("oracle: property parses");
    let sim = Simulator::new(&d.flat);
    let bits = sim.input_bits() as usize;
    assert!(bits * depth <= 18, "oracle limited to 2^18 assignments ({bits} bits x {depth} cycles)");
    let reset = reset_plan(d).state;
    let mut min_v: Option<usize> = None;
    let mut fired = false;
    for code in 0u64..(1u64 << (bits * depth)) {
        let inputs: Vec<Vec<u64>> = (0..depth).map(|c| sim.unpack_inputs(u128::from((code >> (c * bits)) & mask(bits as u32)))).collect();
        let tr = Trace { design: d, samples: simulate(d, &reset, &inputs) };
        if let Some(v) = first_violation(&tr, &p) {
            min_v = Some(min_v.map_or(v, |m| m.min(v)));
        }
        fired |= antecedent_fires(&tr, &p);
    }
    (min_v, fired)
}

/// Reachable values of a register from reset, by BFS over all inputs.
pub fn reachable_values(d: &Design, reg: &str) -> BTreeSet<u64> {
    let sim = Simulator::new(&d.flat);
    let slot = d.flat.signal(reg).unwrap().slot;
    let bits = sim.input_bits();
    let start = reset_plan(d).state;
    let mut seen = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    let mut values = BTreeSet::new();
    while let Some(s) = queue.pop_front() {
        for code in 0..(1u128 << bits) {
            let sample = sim.sample(&s, &sim.unpack_inputs(code));
            values.insert(sample[slot]);
            let next = sim.next_state(&sample);
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    values
}

// ---------------------------------------------------------------------------
// Graph reachability by repeated relaxation (no BFS queue, no visited set).

pub fn brute_cone(n: usize, edges: &[(usize, usize)], seed: usize, depth: Option<usize>) -> BTreeSet<usize> {
    let limit = depth.unwrap_or(n);
    let mut dist = vec![usize::MAX; n];
    dist[seed] = 0;
    for _ in 0..n {
        for &(a, b) in edges {
            if dist[a] != usize::MAX && dist[a] + 1 < dist[b] {
                dist[b] = dist[a] + 1;
            }
        }
    }
    (0..n).filter(|&i| i != seed && dist[i] != usize::MAX && dist[i] <= limit).collect()
}

// ---------------------------------------------------------------------------
// Flop variants with known ground truth.

#[derive(Clone, Debug)]
pub struct FlopVariant {
    pub text: String,
    pub clock_neg: bool,
    /// (signal, active_high, async, value)
    pub reset: Option<(String, bool, bool, u64)>,
    pub data: String,
}

pub fn flop_variants() -> Vec<FlopVariant> {
    let mut out = Vec::new();
    let datas = ["d", "d ^ q", "en ? d : q", "q + 4'd1"];
    let styles = ["plain", "not", "eq", "block"];
    for clock_neg in [false, true] {
        for data in datas {
            // No reset.
            let edge = if clock_neg { "negedge" } else { "posedge" };
            let body = format!("q <= {data};");
            out.push(FlopVariant { text: module(edge, "", &body), clock_neg, reset: None, data: data.to_string() });
            for async_ in [false, true] {
                for active_high in [false, true] {
                    for style in styles {
                        for value in [0u64, 5] {
                            let sig = if active_high { "rst" } else { "rst_n" };
                            let cond = match (style, active_high) {
                                ("not", false) => "!rst_n".to_string(),
                                ("not", true) => "rst".to_string(),
                                ("eq", false) => "rst_n == 1'b0".to_string(),
                                ("eq", true) => "rst == 1'b1".to_string(),
                                (_, false) => "~rst_n".to_string(),
                                (_, true) => "rst".to_string(),
                            };
                            let sens = if async_ { format!(" or {} {sig}", if active_high { "posedge" } else { "negedge" }) } else { String::new() };
                            let body = if style == "block" {
                                format!("if ({cond}) begin\n      q <= 4'd{value};\n    end else begin\n      q <= {data};\n    end")
                            } else {
                                format!("if ({cond}) q <= 4'd{value};\n    else q <= {data};")
                            };
                            out.push(FlopVariant {
                                text: module(edge, &sens, &body),
                                clock_neg,
                                reset: Some((sig.to_string(), active_high, async_, value)),
                                data: data.to_string(),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn module(edge: &str, sens: &str, body: &str) -> String {
    format!(
        "module f(input logic clk, input logic rst, input logic rst_n, input logic en, input logic [3:0] d, output logic [3:0] q);
  always_ff @({edge} clk{sens}) begin
    {body}
  end
endmodule
"
    )
}

pub fn counts<T: Ord + Clone>(xs: &[T]) -> BTreeMap<T, usize> {
    let mut m = BTreeMap::new();
    for x in xs {
        *m.entry(x.clone()).or_default() += 1;
    }
    m
}

// ---------------------------------------------------------------------------
// Report generator for metric checks.

pub fn synthetic_report(rng: &mut ChaCha8Rng, i: usize) -> CaseReport {
    let compiled = rng.gen_bool(0.8);
    let (p, f, u) = if compiled { (rng.gen_range(0..6), rng.gen_range(0..4), rng.gen_range(0..3)) } else { (0, 0, 0) };
    let total = if compiled { p + f + u } else { rng.gen_range(1..5) };
    CaseReport {
        case_id: format!("c{i}"),
        trial_index: 0,
        seed: 0,
        ablation: Ablation::None,
        rounds: Vec::new(),
        best_round: None,
        syntax_score: u8::from(compiled),
        functionality: if compiled && total > 0 { p as f64 / total as f64 } else { 0.0 },
        total_assertions: total,
        counts: Counts { proven: p, falsified: f, undetermined: u, vacuous: 0 },
        fully_functional: compiled && total > 0 && p == total,
        rounds_phase_a: 0,
        rounds_phase_b: 1,
        tools: Default::default(),
        termination_reason: String::new(),
        error: None,
    }
}
