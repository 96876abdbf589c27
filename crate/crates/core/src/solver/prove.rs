//! Bounded exhaustive checking over the product of design and monitor state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::diag::Diagnostic;
use crate::elab::sim::Simulator;
use crate::elab::SigId;
use crate::rtl::ast::mask;
use crate::solver::monitor::{compile_monitor, MonState, MonitorAutomaton, DEFAULT_HISTORY_CAP};
use crate::solver::sva::parse_assertions;
use crate::structure::{ConeDirection, Polarity};

/// File name diagnostics use for the generated bind file.
pub const BIND_FILE: &str = "sva_bind.sv";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionSrc {
    pub label: String,
    /// Text inside `assert property ( ... )`.
    pub property: String,
}

impl AssertionSrc {
    pub fn new(label: impl Into<String>, property: impl Into<String>) -> Self {
        AssertionSrc { label: label.into(), property: property.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub depth: u32,
    /// Maximum explored (state, input) transitions per property.
    pub paths: u64,
    pub wall_time: Duration,
    pub random_runs: u32,
    pub seed: u64,
    pub history_cap: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { depth: 32, paths: 1 << 16, wall_time: Duration::from_secs(30), random_runs: 1000, seed: 0, history_cap: DEFAULT_HISTORY_CAP }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Proven,
    Falsified,
    Undetermined,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Proven => "proven",
            Status::Falsified => "falsified",
            Status::Undetermined => "undetermined",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vacuity {
    Vacuous,
    NonVacuous,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    /// Per signal (array elements expanded), one value per cycle.
    pub signals: BTreeMap<String, Vec<u64>>,
    pub length: usize,
    pub violating_cycle: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub label: String,
    pub status: Status,
    pub vacuous: Option<bool>,
    pub counterexample: Option<Trace>,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofResult {
    pub compile_ok: bool,
    pub diagnostics: Vec<Diagnostic>,
    pub per_property: Vec<PropertyResult>,
    pub bound_reached: u32,
}

impl ProofResult {
    pub fn count(&self, s: Status) -> usize {
        self.per_property.iter().filter(|p| p.status == s).count()
    }

    pub fn get(&self, label: &str) -> Option<&PropertyResult> {
        self.per_property.iter().find(|p| p.label == label)
    }
}

/// Renders the bind file: a header line, then one assertion per line so a
/// diagnostic's line number identifies the assertion.
pub fn render_bind_file(top: &str, assertions: &[AssertionSrc]) -> String {
    let mut s = format!("// assertions bound to module {top}\n");
    for a in assertions {
        let body = a.property.split_whitespace().collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "{}: assert property ({});", a.label, body);
    }
    s
}

/// Parses and name-resolves the candidate against the design's top module.
pub fn compile_candidate(design: &Design, assertions: &[AssertionSrc], history_cap: u32) -> (Vec<MonitorAutomaton>, Vec<Diagnostic>) {
    let text = render_bind_file(&design.top, assertions);
    let (decls, mut diags) = parse_assertions(BIND_FILE, &text);
    for &s in &design.flat.multi_driven {
        diags.push(Diagnostic {
            file: design.files.first().map(|f| f.0.clone()).unwrap_or_default(),
            line: 0,
            col: 0,
            severity: crate::diag::Severity::Error,
            message: format!("signal '{}' has multiple drivers", design.flat.signals[s].path),
        });
    }
    let mut monitors = Vec::new();
    let mut seen = BTreeSet::new();
    for d in &decls {
        if !seen.insert(d.label.clone()) {
            diags.push(Diagnostic::error(&d.span, format!("duplicate assertion label '{}'", d.label)));
            continue;
        }
        match compile_monitor(&design.flat, d, history_cap) {
            Ok(m) => monitors.push(m),
            Err(e) => diags.push(e),
        }
    }
    diags.sort_by_key(|d| (d.line, d.col));
    (monitors, diags)
}

pub fn check_syntax(design: &Design, assertions: &[AssertionSrc]) -> (bool, Vec<Diagnostic>) {
    let (_, diags) = compile_candidate(design, assertions, DEFAULT_HISTORY_CAP);
    (!diags.iter().any(Diagnostic::is_error), diags)
}

/// Derived reset: which top inputs to hold and the state after one reset edge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetPlan {
    /// `(input path, asserted value)`.
    pub asserted: Vec<(String, u64)>,
    pub state: Vec<u64>,
}

const MAX_RESET_INPUTS: usize = 8;

/// Finds the top-level inputs feeding register resets and the assignment of
/// them that activates the most resets, then applies one clock edge from
/// the all-zero state with that assignment and every other input at zero.
pub fn reset_plan(design: &Design) -> ResetPlan {
    let sim = Simulator::new(&design.flat);
    let flat = &design.flat;
    let mut resets: Vec<(SigId, Polarity)> = Vec::new();
    let mut candidates: BTreeSet<SigId> = BTreeSet::new();
    for f in design.graph.flops.values() {
        let Some(r) = &f.reset else { continue };
        let Some(id) = flat.lookup(&r.signal) else { continue };
        resets.push((id, r.polarity));
        if flat.signals[id].is_top_input() {
            candidates.insert(id);
        }
        for p in design.graph.cone(&r.signal, ConeDirection::Fanin, None).unwrap_or_default() {
            if let Some(i) = flat.lookup(&p) {
                if flat.signals[i].is_top_input() {
                    candidates.insert(i);
                }
            }
        }
    }
    let positions: Vec<usize> = candidates.iter().filter_map(|c| sim.inputs.iter().position(|i| i == c)).take(MAX_RESET_INPUTS).collect();
    let zero = sim.zero_state();
    let mut best: Option<(usize, Vec<u64>)> = None;
    for assign in 0u32..(1 << positions.len()) {
        let mut inputs = vec![0u64; sim.inputs.len()];
        for (k, &pos) in positions.iter().enumerate() {
            if assign >> k & 1 == 1 {
                inputs[pos] = mask(flat.signals[sim.inputs[pos]].width);
            }
        }
        let sample = sim.sample(&zero, &inputs);
        let active = resets
            .iter()
            .filter(|(id, pol)| {
                let v = sample[flat.signals[*id].slot] & 1;
                (v == 1) == (*pol == Polarity::ActiveHigh)
            })
            .count();
        if best.as_ref().is_none_or(|(b, _)| active > *b) {
            best = Some((active, inputs));
        }
    }
    let inputs = best.map(|b| b.1).unwrap_or_else(|| vec![0; sim.inputs.len()]);
    let state = sim.next_state(&sim.sample(&zero, &inputs));
    let asserted = positions.iter().map(|&p| (flat.signals[sim.inputs[p]].path.clone(), inputs[p])).collect();
    ResetPlan { asserted, state }
}

/// Replays per-cycle inputs from `start`, returning the sampled valuations.
pub fn simulate(design: &Design, start: &[u64], inputs: &[Vec<u64>]) -> Vec<Vec<u64>> {
    let sim = Simulator::new(&design.flat);
    let mut state = start.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for inp in inputs {
        let s = sim.sample(&state, inp);
        state = sim.next_state(&s);
        out.push(s);
    }
    out
}

/// Signals shown in a trace: the property's signals and their fan-in cones.
fn trace_slots(design: &Design, m: &MonitorAutomaton) -> Vec<(String, usize)> {
    let flat = &design.flat;
    let mut paths: BTreeSet<String> = BTreeSet::new();
    for &s in &m.signals {
        let p = &flat.signals[s].path;
        paths.insert(p.clone());
        paths.extend(design.graph.cone(p, ConeDirection::Fanin, None).unwrap_or_default());
    }
    let clocks: BTreeSet<String> = flat.clocks().iter().map(|c| flat.signals[*c].path.clone()).collect();
    let mut out = Vec::new();
    for (name, slot, _) in flat.slot_names() {
        let base = name.split('[').next().unwrap_or(&name);
        if paths.contains(base) && !clocks.contains(base) {
            out.push((name, slot));
        }
    }
    out
}

pub fn build_trace(design: &Design, m: &MonitorAutomaton, samples: &[Vec<u64>], violating_cycle: usize) -> Trace {
    let signals = trace_slots(design, m).into_iter().map(|(n, slot)| (n, samples.iter().map(|s| s[slot]).collect())).collect();
    Trace { signals, length: samples.len(), violating_cycle }
}

/// Reconstructs per-cycle inputs from a trace (missing inputs read as 0).
pub fn trace_inputs(design: &Design, trace: &Trace) -> Vec<Vec<u64>> {
    let sim = Simulator::new(&design.flat);
    (0..trace.length)
        .map(|c| sim.inputs.iter().map(|i| trace.signals.get(&design.flat.signals[*i].path).map_or(0, |v| v[c])).collect())
        .collect()
}

/// Replays a trace from reset; returns the first violating cycle.
pub fn replay_trace(design: &Design, m: &MonitorAutomaton, trace: &Trace) -> Option<usize> {
    let plan = reset_plan(design);
    let samples = simulate(design, &plan.state, &trace_inputs(design, trace));
    m.run(&design.flat, &samples).0
}

#[derive(Clone, Debug)]
struct Search {
    status: Status,
    vacuity: Vacuity,
    violation: Option<Vec<Vec<u64>>>,
    witness: Option<Vec<Vec<u64>>>,
    depth_done: u32,
    message: String,
}

struct Node {
    parent: usize,
    input: Vec<u64>,
}

fn chain(nodes: &[Node], mut idx: usize, last: Vec<u64>) -> Vec<Vec<u64>> {
    let mut out = vec![last];
    while idx != 0 {
        out.push(nodes[idx].input.clone());
        idx = nodes[idx].parent;
    }
    out.reverse();
    out
}

/// Breadth-first exploration of (design state, monitor state) from reset.
fn explore(design: &Design, m: &MonitorAutomaton, reset: &[u64], budget: &Budget) -> Search {
    let sim = Simulator::new(&design.flat);
    let started = Instant::now();
    let bits = sim.input_bits();
    let fanout: Option<u64> = (bits < 64).then(|| 1u64 << bits);
    let mut nodes = vec![Node { parent: 0, input: Vec::new() }];
    let mut visited: HashMap<(Vec<u64>, MonState), ()> = HashMap::new();
    let init = (reset.to_vec(), m.initial());
    visited.insert(init.clone(), ());
    let mut frontier = vec![(0usize, init.0, init.1)];
    let mut explored: u64 = 0;
    let mut witness = None;
    let mut depth_done = 0;
    let undetermined = |witness: Option<Vec<Vec<u64>>>, depth_done, message: String| Search {
        status: Status::Undetermined,
        vacuity: if witness.is_some() { Vacuity::NonVacuous } else { Vacuity::Unknown },
        violation: None,
        witness,
        depth_done,
        message,
    };
    for cycle in 0..budget.depth {
        let need = fanout.and_then(|f| f.checked_mul(frontier.len() as u64)).and_then(|n| n.checked_add(explored));
        match need {
            Some(n) if n <= budget.paths => {}
            _ => {
                return undetermined(witness, depth_done, format!("path budget of {} exhausted at cycle {cycle}", budget.paths));
            }
        }
        let mut next = Vec::new();
        for (idx, ds, ms) in &frontier {
            for packed in 0..fanout.unwrap_or(0) {
                explored += 1;
                if explored % 1024 == 0 && started.elapsed() > budget.wall_time {
                    return undetermined(witness, depth_done, format!("wall time of {:?} exceeded at cycle {cycle}", budget.wall_time));
                }
                let inputs = sim.unpack_inputs(u128::from(packed));
                let sample = sim.sample(ds, &inputs);
                let out = m.step(&design.flat, ms, &sample);
                if out.violated {
                    return Search {
                        status: Status::Falsified,
                        vacuity: Vacuity::Unknown,
                        violation: Some(chain(&nodes, *idx, inputs)),
                        witness,
                        depth_done,
                        message: format!("assertion violated at cycle {cycle}"),
                    };
                }
                if out.triggered && witness.is_none() {
                    witness = Some(chain(&nodes, *idx, inputs.clone()));
                }
                let key = (sim.next_state(&sample), out.next);
                if !visited.contains_key(&key) {
                    visited.insert(key.clone(), ());
                    nodes.push(Node { parent: *idx, input: inputs });
                    next.push((nodes.len() - 1, key.0, key.1));
                }
            }
        }
        depth_done = cycle + 1;
        if next.is_empty() {
            depth_done = budget.depth;
            break;
        }
        frontier = next;
    }
    let vacuity = if witness.is_some() { Vacuity::NonVacuous } else { Vacuity::Vacuous };
    Search {
        status: Status::Proven,
        vacuity,
        violation: None,
        witness,
        depth_done,
        message: format!("proven(bound={})", budget.depth),
    }
}

/// Random simulation for falsification once exhaustive search gives up.
fn random_runs(design: &Design, m: &MonitorAutomaton, reset: &[u64], budget: &Budget) -> (Option<Vec<Vec<u64>>>, Option<Vec<Vec<u64>>>) {
    let sim = Simulator::new(&design.flat);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let widths: Vec<u32> = sim.inputs.iter().map(|i| design.flat.signals[*i].width).collect();
    let started = Instant::now();
    let mut witness = None;
    for _ in 0..budget.random_runs {
        if started.elapsed() > budget.wall_time {
            break;
        }
        let mut state = reset.to_vec();
        let mut ms = m.initial();
        let mut inputs_so_far = Vec::new();
        for _ in 0..budget.depth {
            let inputs: Vec<u64> = widths.iter().map(|w| rng.gen::<u64>() & mask(*w)).collect();
            let sample = sim.sample(&state, &inputs);
            let out = m.step(&design.flat, &ms, &sample);
            inputs_so_far.push(inputs);
            if out.triggered && witness.is_none() {
                witness = Some(inputs_so_far.clone());
            }
            if out.violated {
                return (Some(inputs_so_far), witness);
            }
            state = sim.next_state(&sample);
            ms = out.next;
        }
    }
    (None, witness)
}

fn check_one(design: &Design, m: &MonitorAutomaton, reset: &[u64], budget: &Budget) -> (PropertyResult, u32, Option<Vec<Vec<u64>>>) {
    let mut s = explore(design, m, reset, budget);
    if s.status == Status::Undetermined && budget.random_runs > 0 {
        let (cex, wit) = random_runs(design, m, reset, budget);
        if s.witness.is_none() {
            if let Some(w) = wit {
                s.witness = Some(w);
                s.vacuity = Vacuity::NonVacuous;
            }
        }
        if let Some(c) = cex {
            s.message = format!("{}; random simulation found a violation at cycle {}", s.message, c.len() - 1);
            s.status = Status::Falsified;
            s.violation = Some(c);
        }
    }
    let counterexample = s.violation.as_ref().map(|inputs| {
        let samples = simulate(design, reset, inputs);
        build_trace(design, m, &samples, samples.len() - 1)
    });
    let vacuous = match (s.status, s.vacuity) {
        (Status::Falsified, _) | (_, Vacuity::Unknown) => None,
        (_, Vacuity::Vacuous) => Some(true),
        (_, Vacuity::NonVacuous) => Some(false),
    };
    let mut message = s.message;
    if vacuous == Some(true) {
        message.push_str("; vacuous: antecedent never completes");
    }
    (PropertyResult { label: m.label.clone(), status: s.status, vacuous, counterexample, message }, s.depth_done, s.witness)
}

/// Checks every assertion of the candidate to the budgeted depth.
pub fn prove(design: &Design, assertions: &[AssertionSrc], budget: &Budget) -> ProofResult {
    prove_with_witnesses(design, assertions, budget).0
}

/// As [`prove`], also returning for each property the input sequence of an
/// execution in which its antecedent completes, when one was found.
pub fn prove_with_witnesses(design: &Design, assertions: &[AssertionSrc], budget: &Budget) -> (ProofResult, Vec<Option<Vec<Vec<u64>>>>) {
    let (monitors, diagnostics) = compile_candidate(design, assertions, budget.history_cap);
    if diagnostics.iter().any(Diagnostic::is_error) {
        return (ProofResult { compile_ok: false, diagnostics, per_property: Vec::new(), bound_reached: 0 }, Vec::new());
    }
    let reset = reset_plan(design).state;
    let results: Vec<_> = monitors.par_iter().map(|m| check_one(design, m, &reset, budget)).collect();
    let bound_reached = results.iter().map(|r| r.1).min().unwrap_or(budget.depth);
    let witnesses = results.iter().map(|r| r.2.clone()).collect();
    let per_property = results.into_iter().map(|r| r.0).collect();
    (ProofResult { compile_ok: true, diagnostics, per_property, bound_reached }, witnesses)
}

/// Vacuity of a single property under the budget.
pub fn vacuity_check(design: &Design, property: &AssertionSrc, budget: &Budget) -> Vacuity {
    let (monitors, diags) = compile_candidate(design, std::slice::from_ref(property), budget.history_cap);
    if diags.iter().any(Diagnostic::is_error) || monitors.is_empty() {
        return Vacuity::Unknown;
    }
    let reset = reset_plan(design).state;
    let mut s = explore(design, &monitors[0], &reset, &Budget { ..budget.clone() });
    if s.status == Status::Falsified {
        // A violation implies the antecedent completed on that path.
        return Vacuity::NonVacuous;
    }
    if s.vacuity == Vacuity::Unknown && budget.random_runs > 0 {
        if random_runs(design, &monitors[0], &reset, budget).1.is_some() {
            s.vacuity = Vacuity::NonVacuous;
        }
    }
    s.vacuity
}

/// Renders a trace as a signal-by-cycle table; the violating cycle is
/// marked with `*`.
pub fn trace_table(trace: &Trace) -> String {
    let name_w = trace.signals.keys().map(String::len).max().unwrap_or(6).max(6);
    let cells: Vec<Vec<String>> = trace.signals.values().map(|v| v.iter().map(|x| format!("{x:#x}")).collect()).collect();
    let col_w: Vec<usize> = (0..trace.length)
        .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(1).max(c.to_string().len() + 1))
        .collect();
    let mut s = format!("{:<name_w$}", "cycle");
    for (c, w) in col_w.iter().enumerate() {
        let head = if c == trace.violating_cycle { format!("{c}*") } else { c.to_string() };
        let _ = write!(s, " | {head:>w$}");
    }
    s.push('\n');
    for (name, row) in trace.signals.keys().zip(&cells) {
        let _ = write!(s, "{name:<name_w$}");
        for (v, w) in row.iter().zip(&col_w) {
            let _ = write!(s, " | {v:>w$}");
        }
        s.push('\n');
    }
    s
}

/// Seeded random inputs for `cycles` cycles (used by fuzzing and tests).
pub fn random_inputs(design: &Design, cycles: usize, seed: u64) -> Vec<Vec<u64>> {
    let sim = Simulator::new(&design.flat);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cycles).map(|_| sim.inputs.iter().map(|i| rng.gen::<u64>() & mask(design.flat.signals[*i].width)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOGGLE: &str = "module t(input clk, input rst, output reg q);
  always @(posedge clk) if (rst) q <= 1'b0; else q <= ~q;
endmodule";

    fn toggle() -> Design {
        Design::from_text(TOGGLE, "t").unwrap()
    }

    fn one(d: &Design, prop: &str, depth: u32) -> PropertyResult {
        let b = Budget { depth, ..Budget::default() };
        let r = prove(d, &[AssertionSrc::new("p", prop)], &b);
        assert!(r.compile_ok, "{:?}", r.diagnostics);
        r.per_property[0].clone()
    }

    #[test]
    fn tautology_proven() {
        assert_eq!(one(&toggle(), "@(posedge clk) 1'b1 |-> 1'b1", 8).status, Status::Proven);
    }

    #[test]
    fn toggle_orbit() {
        let d = toggle();
        assert_eq!(one(&d, "@(posedge clk) disable iff (rst) q |-> ##1 !q", 8).status, Status::Proven);
        let r = one(&d, "@(posedge clk) disable iff (rst) q |-> ##1 q", 8);
        assert_eq!(r.status, Status::Falsified);
        let t = r.counterexample.unwrap();
        assert_eq!(t.length, 3);
        assert_eq!(t.signals["q"], vec![0, 1, 0]);
    }

    #[test]
    fn reset_is_applied() {
        let plan = reset_plan(&toggle());
        assert_eq!(plan.asserted, vec![("rst".to_string(), 1)]);
        assert_eq!(plan.state, vec![0]);
    }

    #[test]
    fn wide_input_is_undetermined() {
        let d = Design::from_text(
            "module w(input clk, input [63:0] a, output reg [63:0] r); always @(posedge clk) r <= a; endmodule",
            "w",
        )
        .unwrap();
        let b = Budget { depth: 20, random_runs: 10, ..Budget::default() };
        let r = prove(&d, &[AssertionSrc::new("p", "@(posedge clk) 1'b1 |-> r == r")], &b);
        assert_eq!(r.per_property[0].status, Status::Undetermined);
    }

    #[test]
    fn vacuity_fixtures() {
        let d = toggle();
        let b = Budget { depth: 8, ..Budget::default() };
        assert_eq!(vacuity_check(&d, &AssertionSrc::new("p", "@(posedge clk) 1'b0 |-> q"), &b), Vacuity::Vacuous);
        assert_eq!(vacuity_check(&d, &AssertionSrc::new("p", "@(posedge clk) 1'b1 |-> 1'b1"), &b), Vacuity::NonVacuous);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let d = Design::from_text(
            "module m(input clk, input [3:0] x, output reg y); reg [1:0] ready [0:3]; always @(posedge clk) y <= x[0]; endmodule",
            "m",
        )
        .unwrap();
        let (ok, diags) = check_syntax(&d, &[AssertionSrc::new("a", "@(posedge clk) ready[1:3] == 'd0")]);
        assert!(!ok);
        assert!(diags[0].message.contains("part-select of unpacked array 'ready'"), "{}", diags[0]);
        assert_eq!(diags[0].line, 2);
        let (ok, diags) = check_syntax(&d, &[AssertionSrc::new("a", "@(posedge clk) yy |-> x")]);
        assert!(!ok);
        assert!(diags[0].message.contains("nearest declared names: y"), "{}", diags[0]);
        let (ok, _) = check_syntax(&d, &[AssertionSrc::new("a", "@(posedge clk) x[0] |-> ##1 y")]);
        assert!(ok);
    }

    #[test]
    fn trace_table_marks_violation() {
        let t = Trace { signals: BTreeMap::from([("q".to_string(), vec![0, 1])]), length: 2, violating_cycle: 1 };
        let s = trace_table(&t);
        assert!(s.contains("1*"));
        assert!(s.lines().nth(1).unwrap().starts_with("q"));
    }
}
