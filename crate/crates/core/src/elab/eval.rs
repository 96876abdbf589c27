//! Two-state expression evaluation with Verilog-style width extension.
//!
//! Context-determined operators are evaluated at `max(self width, context
//! width)`; comparisons, logical and reduction operators size their operands
//! independently. Values are unsigned.

use crate::elab::{FExpr, FKind, FStmt, HistoryFn, LValue, Select, Signal};
use crate::rtl::ast::{mask, BinaryOp, UnaryOp};

/// Read access to a valuation.
pub trait Env {
    fn slot(&self, slot: usize) -> u64;

    /// Value of history slot `slot`, `depth` cycles back. Zero before time 0.
    fn history(&self, _slot: usize, _depth: u32) -> u64 {
        0
    }
}

impl Env for &[u64] {
    fn slot(&self, slot: usize) -> u64 {
        self[slot]
    }
}

impl Env for Vec<u64> {
    fn slot(&self, slot: usize) -> u64 {
        self[slot]
    }
}

#[derive(Clone, Copy)]
pub struct Evaluator<'a> {
    pub signals: &'a [Signal],
}

impl<'a> Evaluator<'a> {
    pub fn new(signals: &'a [Signal]) -> Self {
        Evaluator { signals }
    }

    /// Evaluates `e` as a condition (non-zero is true).
    pub fn truth(&self, e: &FExpr, env: &dyn Env) -> bool {
        self.eval(e, env, 0) != 0
    }

    pub fn eval(&self, e: &FExpr, env: &dyn Env, ctx: u32) -> u64 {
        let w = e.width.max(ctx).min(64);
        let m = mask(w);
        match &e.kind {
            FKind::Const { value, fill } => {
                if *fill {
                    m
                } else {
                    *value & m
                }
            }
            FKind::Sig(id) => env.slot(self.signals[*id].slot),
            FKind::Elem { sig, index } => {
                let idx = self.eval(index, env, 0) as i64;
                match self.signals[*sig].element_slot(idx) {
                    Some(s) => env.slot(s),
                    None => 0,
                }
            }
            FKind::Bit { base, index, packed } => {
                let v = self.eval(base, env, 0);
                let idx = self.eval(index, env, 0) as i64;
                match bit_position(*packed, base.width, idx) {
                    Some(p) => (v >> p) & 1,
                    None => 0,
                }
            }
            FKind::Slice { base, lo } => (self.eval(base, env, 0) >> lo) & mask(e.width),
            FKind::Unary { op, operand } => match op {
                UnaryOp::Neg => self.eval(operand, env, w).wrapping_neg() & m,
                UnaryOp::BitNot => !self.eval(operand, env, w) & m,
                UnaryOp::Plus => self.eval(operand, env, w) & m,
                UnaryOp::Not => u64::from(self.eval(operand, env, 0) == 0),
                _ => {
                    let ow = operand.width;
                    let v = self.eval(operand, env, 0) & mask(ow);
                    let all = v == mask(ow);
                    let parity = u64::from(v.count_ones() % 2 == 1);
                    match op {
                        UnaryOp::RedAnd => u64::from(all),
                        UnaryOp::RedNand => u64::from(!all),
                        UnaryOp::RedOr => u64::from(v != 0),
                        UnaryOp::RedNor => u64::from(v == 0),
                        UnaryOp::RedXor => parity,
                        UnaryOp::RedXnor => parity ^ 1,
                        _ => unreachable!(),
                    }
                }
            },
            FKind::Binary { op, lhs, rhs } => {
                use BinaryOp::*;
                match op {
                    Add | Sub | Mul | Div | Mod | BitAnd | BitOr | BitXor | BitXnor => {
                        let (a, b) = (self.eval(lhs, env, w), self.eval(rhs, env, w));
                        let r = match op {
                            Add => a.wrapping_add(b),
                            Sub => a.wrapping_sub(b),
                            Mul => a.wrapping_mul(b),
                            Div => a.checked_div(b).unwrap_or(0),
                            Mod => a.checked_rem(b).unwrap_or(0),
                            BitAnd => a & b,
                            BitOr => a | b,
                            BitXor => a ^ b,
                            _ => !(a ^ b),
                        };
                        r & m
                    }
                    Shl | Shr => {
                        let a = self.eval(lhs, env, w);
                        let b = self.eval(rhs, env, 0);
                        let r = if b >= 64 {
                            0
                        } else if *op == Shl {
                            a << b
                        } else {
                            a >> b
                        };
                        r & m
                    }
                    Lt | Le | Gt | Ge | Eq | Ne | CaseEq | CaseNe => {
                        let ow = lhs.width.max(rhs.width);
                        let (a, b) = (self.eval(lhs, env, ow), self.eval(rhs, env, ow));
                        u64::from(match op {
                            Lt => a < b,
                            Le => a <= b,
                            Gt => a > b,
                            Ge => a >= b,
                            Eq | CaseEq => a == b,
                            _ => a != b,
                        })
                    }
                    LogAnd => u64::from(self.eval(lhs, env, 0) != 0 && self.eval(rhs, env, 0) != 0),
                    LogOr => u64::from(self.eval(lhs, env, 0) != 0 || self.eval(rhs, env, 0) != 0),
                }
            }
            FKind::Ternary { cond, then, els } => {
                if self.eval(cond, env, 0) != 0 {
                    self.eval(then, env, w)
                } else {
                    self.eval(els, env, w)
                }
            }
            FKind::Concat(items) => {
                let mut v = 0u64;
                for it in items {
                    v = shl(v, it.width) | (self.eval(it, env, 0) & mask(it.width));
                }
                v & m
            }
            FKind::Replicate { count, items } => {
                let mut v = 0u64;
                for _ in 0..*count {
                    for it in items {
                        v = shl(v, it.width) | (self.eval(it, env, 0) & mask(it.width));
                    }
                }
                v & m
            }
            FKind::History { func, operand, depth, slot } => {
                let ow = operand.width;
                match func {
                    HistoryFn::Past => env.history(*slot, *depth) & m,
                    HistoryFn::Rose => {
                        let cur = self.eval(operand, env, 0) & 1;
                        let prev = env.history(*slot, 1) & 1;
                        u64::from(cur == 1 && prev == 0)
                    }
                    HistoryFn::Fell => {
                        let cur = self.eval(operand, env, 0) & 1;
                        let prev = env.history(*slot, 1) & 1;
                        u64::from(cur == 0 && prev == 1)
                    }
                    HistoryFn::Stable => {
                        let cur = self.eval(operand, env, 0) & mask(ow);
                        u64::from(cur == env.history(*slot, 1) & mask(ow))
                    }
                }
            }
        }
    }
}

fn shl(v: u64, by: u32) -> u64 {
    if by >= 64 {
        0
    } else {
        v << by
    }
}

fn bit_position(packed: (i64, i64), width: u32, index: i64) -> Option<u32> {
    let (msb, lsb) = packed;
    let pos = if msb >= lsb { index - lsb } else { lsb - index };
    (0..i64::from(width)).contains(&pos).then_some(pos as u32)
}

/// A resolved write: `slot = (slot & !mask) | bits`.
#[derive(Clone, Copy, Debug)]
struct Write {
    slot: usize,
    mask: u64,
    bits: u64,
}

impl Write {
    fn apply(&self, vals: &mut [u64]) {
        vals[self.slot] = (vals[self.slot] & !self.mask) | (self.bits & self.mask);
    }
}

/// Statement execution. Blocking writes land in `vals` immediately;
/// nonblocking writes are queued until [`Exec::commit`].
pub struct Exec<'a, 'v> {
    ev: Evaluator<'a>,
    pub vals: &'v mut Vec<u64>,
    pending: Vec<Write>,
    /// Treat nonblocking writes as blocking (combinational settling).
    immediate: bool,
}

impl<'a, 'v> Exec<'a, 'v> {
    pub fn new(ev: Evaluator<'a>, vals: &'v mut Vec<u64>, immediate: bool) -> Self {
        Exec { ev, vals, pending: Vec::new(), immediate }
    }

    pub fn run(&mut self, s: &FStmt) {
        match s {
            FStmt::Block(items) => items.iter().for_each(|s| self.run(s)),
            FStmt::If { cond, then, els } => {
                if self.ev.truth(cond, &*self.vals) {
                    self.run(then);
                } else if let Some(e) = els {
                    self.run(e);
                }
            }
            FStmt::Case { subject, arms, default } => {
                for (labels, body) in arms {
                    for l in labels {
                        let w = subject.width.max(l.width);
                        if self.ev.eval(subject, &*self.vals, w) == self.ev.eval(l, &*self.vals, w) {
                            self.run(body);
                            return;
                        }
                    }
                }
                if let Some(d) = default {
                    self.run(d);
                }
            }
            FStmt::Assign { lhs, rhs, blocking } => {
                let w = lvalue_width(lhs, self.ev.signals);
                let v = self.ev.eval(rhs, &*self.vals, w) & mask(w);
                let mut writes = Vec::new();
                self.resolve(lhs, v, &mut writes);
                if *blocking || self.immediate {
                    writes.iter().for_each(|wr| wr.apply(self.vals));
                } else {
                    self.pending.extend(writes);
                }
            }
            FStmt::Null => {}
        }
    }

    fn resolve(&self, lv: &LValue, v: u64, out: &mut Vec<Write>) {
        match lv {
            LValue::Target { sig, elem, select } => {
                let s = &self.ev.signals[*sig];
                let slot = match elem {
                    Some(e) => match s.element_slot(self.ev.eval(e, &*self.vals, 0) as i64) {
                        Some(slot) => slot,
                        None => return,
                    },
                    None => s.slot,
                };
                match select {
                    Select::All => out.push(Write { slot, mask: mask(s.width), bits: v }),
                    Select::Bit { index, packed } => {
                        let idx = self.ev.eval(index, &*self.vals, 0) as i64;
                        if let Some(p) = bit_position(*packed, s.width, idx) {
                            out.push(Write { slot, mask: 1 << p, bits: (v & 1) << p });
                        }
                    }
                    Select::Range { lo, width } => {
                        out.push(Write { slot, mask: mask(*width) << lo, bits: (v & mask(*width)) << lo });
                    }
                }
            }
            LValue::Concat(items) => {
                let mut rest = v;
                for it in items.iter().rev() {
                    let w = lvalue_width(it, self.ev.signals);
                    self.resolve(it, rest & mask(w), out);
                    rest = shr(rest, w);
                }
            }
        }
    }

    pub fn commit(&mut self) {
        for w in std::mem::take(&mut self.pending) {
            w.apply(self.vals);
        }
    }
}

fn shr(v: u64, by: u32) -> u64 {
    if by >= 64 {
        0
    } else {
        v >> by
    }
}

pub fn lvalue_width(lv: &LValue, signals: &[Signal]) -> u32 {
    match lv {
        LValue::Target { sig, select, .. } => match select {
            Select::All => signals[*sig].width,
            Select::Bit { .. } => 1,
            Select::Range { width, .. } => *width,
        },
        LValue::Concat(items) => items.iter().map(|i| lvalue_width(i, signals)).sum(),
    }
}
