//! Property compilation and the cycle-stepped monitor automaton.
//!
//! A monitor state holds the live antecedent threads, one thread set per
//! pending consequent obligation, and the history buffer for `$past` and
//! friends. A thread is `(step, elapsed)`: the index of the next sequence
//! step to match and the cycles waited since the previous match.

use std::cell::RefCell;
use std::collections::{BTreeSet, VecDeque};

use serde::Serialize;

use crate::diag::{Diagnostic, Span};
use crate::elab::eval::{Env, Evaluator};
use crate::elab::{Ctx, ElabError, FExpr, FKind, FlatDesign, HistoryFn, SigId};
use crate::rtl::ast::{BinaryOp, Edge, Expr};
use crate::rtl::params::eval_const;
use crate::solver::sva::{AssertionDecl, ImplKind, PropertyAst, Sequence};

pub const DEFAULT_HISTORY_CAP: u32 = 16;

/// Longest delay accepted in a `##` range.
pub const MAX_DELAY: u32 = 1024;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CStep {
    pub delay: (u32, u32),
    pub expr: FExpr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HistorySlot {
    pub operand: FExpr,
    pub depth: u32,
}

/// A compiled property, ready to step over sampled valuations.
#[derive(Clone, Debug, Serialize)]
pub struct MonitorAutomaton {
    pub label: String,
    pub property: PropertyAst,
    pub clock: Option<(Edge, SigId)>,
    pub disable: Option<FExpr>,
    pub antecedent: Option<Vec<CStep>>,
    /// Consequent steps; for `|=>` the first delay is already shifted by one.
    pub consequent: Vec<CStep>,
    pub history: Vec<HistorySlot>,
    /// Signals the property reads.
    pub signals: BTreeSet<SigId>,
}

pub type Thread = (u16, u16);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct MonState {
    pub ante: BTreeSet<Thread>,
    pub obligations: BTreeSet<BTreeSet<Thread>>,
    /// Per history slot, most recent value first.
    pub hist: Vec<Vec<u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub next: MonState,
    pub violated: bool,
    /// The antecedent completed this cycle, so an obligation was started.
    pub triggered: bool,
}

struct SampleEnv<'a> {
    vals: &'a [u64],
    hist: &'a [Vec<u64>],
}

impl Env for SampleEnv<'_> {
    fn slot(&self, slot: usize) -> u64 {
        self.vals[slot]
    }

    fn history(&self, slot: usize, depth: u32) -> u64 {
        self.hist[slot].get(depth as usize - 1).copied().unwrap_or(0)
    }
}

impl MonitorAutomaton {
    pub fn initial(&self) -> MonState {
        MonState {
            ante: BTreeSet::new(),
            obligations: BTreeSet::new(),
            hist: self.history.iter().map(|h| vec![0; h.depth as usize]).collect(),
        }
    }

    /// Advances one thread set over the current cycle. Returns the threads
    /// alive for the next cycle and whether some thread completed.
    fn advance(ev: &Evaluator, seq: &[CStep], threads: impl IntoIterator<Item = Thread>, env: &dyn Env) -> (BTreeSet<Thread>, bool) {
        let mut next = BTreeSet::new();
        let mut matched = false;
        let mut seen = BTreeSet::new();
        let mut work: VecDeque<Thread> = threads.into_iter().collect();
        while let Some(t @ (i, e)) = work.pop_front() {
            if !seen.insert(t) {
                continue;
            }
            let step = &seq[i as usize];
            let (lo, hi) = step.delay;
            let e32 = u32::from(e);
            if e32 >= lo && e32 <= hi && ev.truth(&step.expr, env) {
                if i as usize + 1 == seq.len() {
                    matched = true;
                } else {
                    work.push_back((i + 1, 0));
                }
            }
            if e32 < hi {
                next.insert((i, e + 1));
            }
        }
        (next, matched)
    }

    /// Consumes one sampled valuation.
    pub fn step(&self, design: &FlatDesign, st: &MonState, vals: &[u64]) -> StepOutcome {
        let ev = Evaluator::new(&design.signals);
        let env = SampleEnv { vals, hist: &st.hist };
        let mut hist = Vec::with_capacity(self.history.len());
        for (k, h) in self.history.iter().enumerate() {
            let mut buf = Vec::with_capacity(h.depth as usize);
            buf.push(ev.eval(&h.operand, &env, 0));
            buf.extend(st.hist[k].iter().take(h.depth as usize - 1).copied());
            hist.push(buf);
        }
        if self.disable.as_ref().is_some_and(|d| ev.truth(d, &env)) {
            return StepOutcome { next: MonState { ante: BTreeSet::new(), obligations: BTreeSet::new(), hist }, violated: false, triggered: false };
        }
        let (ante, triggered) = match &self.antecedent {
            Some(seq) => Self::advance(&ev, seq, st.ante.iter().copied().chain([(0, 0)]), &env),
            None => (BTreeSet::new(), true),
        };
        let mut pending: Vec<BTreeSet<Thread>> = st.obligations.iter().cloned().collect();
        if triggered {
            pending.push(BTreeSet::from([(0, 0)]));
        }
        let mut obligations = BTreeSet::new();
        let mut violated = false;
        for ob in pending {
            let (next, done) = Self::advance(&ev, &self.consequent, ob, &env);
            if done {
                continue;
            }
            if next.is_empty() {
                violated = true;
            } else {
                obligations.insert(next);
            }
        }
        StepOutcome { next: MonState { ante, obligations, hist }, violated, triggered }
    }

    /// Runs the monitor over a sequence of samples; returns the first
    /// violating cycle and the first triggering cycle.
    pub fn run(&self, design: &FlatDesign, samples: &[Vec<u64>]) -> (Option<usize>, Option<usize>) {
        let mut st = self.initial();
        let mut trig = None;
        for (c, s) in samples.iter().enumerate() {
            let out = self.step(design, &st, s);
            if out.triggered && trig.is_none() {
                trig = Some(c);
            }
            if out.violated {
                return (Some(c), trig);
            }
            st = out.next;
        }
        (None, trig)
    }
}

fn suggestions(design: &FlatDesign, name: &str) -> Vec<String> {
    let mut cands: Vec<(usize, &str)> = design
        .signals
        .iter()
        .map(|s| (strsim::levenshtein(name, &s.path), s.path.as_str()))
        .collect();
    cands.sort();
    cands.into_iter().take(3).map(|(_, n)| n.to_string()).collect()
}

const SYSTEM_FUNCTIONS: &[&str] = &["$past", "$rose", "$fell", "$stable", "$onehot", "$onehot0", "$countones"];

/// Name resolution and construct checks that carry positions.
fn check_names(design: &FlatDesign, params: &std::collections::BTreeMap<String, i64>, e: &Expr, fallback: &Span, out: &mut Vec<Diagnostic>) {
    let ident_span = |e: &Expr| match e {
        Expr::Ident { span, .. } if span.line > 0 => span.clone(),
        _ => fallback.clone(),
    };
    match e {
        Expr::Ident { name, span } => {
            if params.contains_key(name) {
                return;
            }
            match design.signal(name) {
                Some(s) if s.array.is_some() => out.push(Diagnostic::error(span, format!("unsupported construct: whole-array reference to unpacked array '{name}'"))),
                Some(_) => {}
                None => out.push(Diagnostic::error(
                    span,
                    format!("undeclared identifier '{name}' in bind target '{}'; nearest declared names: {}", design.top, suggestions(design, name).join(", ")),
                )),
            }
        }
        Expr::Literal(_) => {}
        Expr::Index { base, index } => {
            if let Expr::Ident { name, .. } = &**base {
                if design.signal(name).is_some_and(|s| s.array.is_some()) {
                    check_names(design, params, index, fallback, out);
                    return;
                }
            }
            check_names(design, params, base, fallback, out);
            check_names(design, params, index, fallback, out);
        }
        Expr::Slice { base, msb, lsb } => {
            if let Expr::Ident { name, .. } = &**base {
                if design.signal(name).is_some_and(|s| s.array.is_some()) {
                    out.push(Diagnostic::error(&ident_span(base), format!("unsupported construct: part-select of unpacked array '{name}'")));
                    return;
                }
            }
            for x in [base, msb, lsb] {
                check_names(design, params, x, fallback, out);
            }
        }
        Expr::Unary { operand, .. } => check_names(design, params, operand, fallback, out),
        Expr::Binary { lhs, rhs, .. } => {
            check_names(design, params, lhs, fallback, out);
            check_names(design, params, rhs, fallback, out);
        }
        Expr::Ternary { cond, then, els } => {
            for x in [cond, then, els] {
                check_names(design, params, x, fallback, out);
            }
        }
        Expr::Concat(items) => items.iter().for_each(|x| check_names(design, params, x, fallback, out)),
        Expr::Replicate { count, items } => {
            check_names(design, params, count, fallback, out);
            items.iter().for_each(|x| check_names(design, params, x, fallback, out));
        }
        Expr::Call { name, args } => {
            if !SYSTEM_FUNCTIONS.contains(&name.as_str()) {
                out.push(Diagnostic::error(fallback, format!("unsupported system function {name}")));
                return;
            }
            args.iter().for_each(|x| check_names(design, params, x, fallback, out));
        }
    }
}

fn fx(kind: FKind, width: u32) -> FExpr {
    FExpr { kind, width }
}

fn bin(op: BinaryOp, l: FExpr, r: FExpr, width: u32) -> FExpr {
    fx(FKind::Binary { op, lhs: Box::new(l), rhs: Box::new(r) }, width)
}

/// Compiles one parsed assertion against the top of `design`.
pub fn compile_monitor(design: &FlatDesign, decl: &AssertionDecl, history_cap: u32) -> Result<MonitorAutomaton, Diagnostic> {
    let prop = &decl.property;
    let at = &decl.span;
    let params = design.instances.get("").map(|i| i.params.clone()).unwrap_or_default();

    let mut diags = Vec::new();
    for e in prop.exprs() {
        check_names(design, &params, e, at, &mut diags);
    }
    if let Some(d) = diags.into_iter().next() {
        return Err(d);
    }

    let clock = match &prop.clock {
        Some((edge, name)) => {
            let id = design.lookup(name).ok_or_else(|| {
                Diagnostic::error(at, format!("undeclared clock '{name}'; nearest declared names: {}", suggestions(design, name).join(", ")))
            })?;
            let clocks = design.clocks();
            if !clocks.is_empty() && !clocks.contains(&design.alias_root(id)) {
                return Err(Diagnostic::error(at, format!("'{name}' does not clock any register in '{}'", design.top)));
            }
            Some((*edge, id))
        }
        None => None,
    };

    let history: RefCell<Vec<HistorySlot>> = RefCell::new(Vec::new());
    let hook_err: RefCell<Option<String>> = RefCell::new(None);
    let lookup = |p: &str| design.lookup(p);
    let calls = |ctx: &Ctx, name: &str, args: &[Expr]| -> Result<FExpr, ElabError> {
        let bad = |m: String| ElabError::Unsupported(m);
        let one = |n: usize| -> Result<FExpr, ElabError> {
            if args.len() != n && !(name == "$past" && args.len() == 2) {
                return Err(bad(format!("{name} expects {n} argument(s), got {}", args.len())));
            }
            ctx.expr(&args[0])
        };
        let register = |operand: FExpr, depth: u32| -> usize {
            let mut h = history.borrow_mut();
            if let Some(k) = h.iter().position(|s| s.operand == operand) {
                h[k].depth = h[k].depth.max(depth);
                k
            } else {
                h.push(HistorySlot { operand, depth });
                h.len() - 1
            }
        };
        match name {
            "$past" | "$rose" | "$fell" | "$stable" => {
                let operand = one(1)?;
                let depth = if name == "$past" && args.len() == 2 {
                    let d = eval_const(&args[1], &mut |n: &str| ctx.params.get(n).copied().ok_or(()))
                        .map_err(|_| bad(format!("$past depth '{}' is not a constant", args[1])))?;
                    if d < 1 {
                        return Err(bad(format!("$past depth must be at least 1, got {d}")));
                    }
                    d as u32
                } else {
                    1
                };
                if depth > history_cap {
                    *hook_err.borrow_mut() = Some(format!("history depth {depth} exceeds the configured cap of {history_cap}"));
                    return Err(bad(format!("history depth {depth} exceeds the configured cap of {history_cap}")));
                }
                let func = match name {
                    "$past" => HistoryFn::Past,
                    "$rose" => HistoryFn::Rose,
                    "$fell" => HistoryFn::Fell,
                    _ => HistoryFn::Stable,
                };
                let width = if name == "$past" { operand.width } else { 1 };
                let slot = register(operand.clone(), depth);
                Ok(fx(FKind::History { func, operand: Box::new(operand), depth, slot }, width))
            }
            "$onehot" | "$onehot0" => {
                let x = one(1)?;
                let w = x.width;
                let dec = bin(BinaryOp::Sub, x.clone(), FExpr::constant(1, w), w);
                let clear = bin(BinaryOp::Eq, bin(BinaryOp::BitAnd, x.clone(), dec, w), FExpr::constant(0, w), 1);
                if name == "$onehot0" {
                    Ok(clear)
                } else {
                    let nz = bin(BinaryOp::Ne, x, FExpr::constant(0, w), 1);
                    Ok(bin(BinaryOp::LogAnd, nz, clear, 1))
                }
            }
            _ => {
                let x = one(1)?;
                let w = 32 - (x.width).leading_zeros();
                let mut sum: Option<FExpr> = None;
                for i in 0..x.width {
                    let bit = fx(FKind::Slice { base: Box::new(x.clone()), lo: i }, 1);
                    sum = Some(match sum {
                        None => bit,
                        Some(s) => bin(BinaryOp::Add, s, bit, w),
                    });
                }
                Ok(sum.unwrap_or_else(|| FExpr::constant(0, 1)))
            }
        }
    };
    let ctx = Ctx { scope: String::new(), params: params.clone(), lookup: &lookup, signals: &design.signals, calls: Some(&calls) };
    let lower = |e: &Expr| ctx.expr(e).map_err(|err| Diagnostic::error(at, err.to_string()));
    let steps = |s: &Sequence, shift: u32| -> Result<Vec<CStep>, Diagnostic> {
        s.steps
            .iter()
            .enumerate()
            .map(|(i, st)| {
                let (lo, hi) = if i == 0 { (st.delay.0 + shift, st.delay.1 + shift) } else { st.delay };
                if hi > MAX_DELAY {
                    return Err(Diagnostic::error(at, format!("delay {hi} exceeds the supported maximum of {MAX_DELAY}")));
                }
                Ok(CStep { delay: (lo, hi), expr: lower(&st.expr)? })
            })
            .collect()
    };
    let disable = prop.disable_iff.as_ref().map(lower).transpose()?;
    let antecedent = prop.antecedent.as_ref().map(|a| steps(a, 0)).transpose()?;
    let shift = u32::from(prop.antecedent.is_some() && prop.kind == ImplKind::NonOverlapped);
    let consequent = steps(&prop.consequent, shift)?;
    if let Some(e) = hook_err.into_inner() {
        return Err(Diagnostic::error(at, e));
    }
    let mut signals = BTreeSet::new();
    for e in disable.iter().chain(antecedent.iter().flatten().map(|s| &s.expr)).chain(consequent.iter().map(|s| &s.expr)) {
        e.collect_sigs(&mut signals);
    }
    if let Some((_, c)) = clock {
        signals.insert(c);
    }
    Ok(MonitorAutomaton {
        label: decl.label.clone(),
        property: prop.clone(),
        clock,
        disable,
        antecedent,
        consequent,
        history: history.into_inner(),
        signals,
    })
}
