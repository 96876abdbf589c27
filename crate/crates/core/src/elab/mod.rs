//! Hierarchy flattening into a word-level netlist.
//!
//! Every signal of every instance becomes one [`Signal`] with a dotted path
//! (`u1.q`; top-level signals carry no prefix). Continuous assignments,
//! always blocks and port connections become [`Process`]es whose
//! expressions reference signals by id with parameters already folded.

pub mod eval;
pub mod sim;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diag::Diagnostic;
use crate::rtl::ast::{
    self, AlwaysBlock, BinaryOp, Direction, Edge, Expr, LitForm, ModuleDecl, ModuleItem, NetKind, Sensitivity, SourceUnit,
    Stmt, UnaryOp,
};
use crate::rtl::lexer::MAX_WIDTH;
use crate::rtl::params::{eval_const, resolve_module_parameters, ConstError};
use crate::rtl::RtlError;

pub type SigId = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ElabError {
    #[error(transparent)]
    Rtl(#[from] RtlError),
    #[error("unresolved instance target '{target}' for '{path}'")]
    UnresolvedTarget { path: String, target: String },
    #[error("unsupported in elaboration: {0}")]
    Unsupported(String),
    #[error("unknown signal '{0}'")]
    UnknownSignal(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    Input,
    Output,
    Wire,
    Reg,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signal {
    pub path: String,
    pub width: u32,
    pub kind: SignalKind,
    pub port: Option<Direction>,
    /// Packed range as declared, `(msb, lsb)`.
    pub packed: (i64, i64),
    /// Unpacked element range as declared, `(left, right)`.
    pub array: Option<(i64, i64)>,
    /// First storage slot.
    pub slot: usize,
    /// Instance path owning the signal; empty for the top.
    pub scope: String,
}

impl Signal {
    pub fn slots(&self) -> usize {
        match self.array {
            Some((l, r)) => (l - r).unsigned_abs() as usize + 1,
            None => 1,
        }
    }

    /// Storage slot for an element index, `None` when out of range.
    pub fn element_slot(&self, index: i64) -> Option<usize> {
        let (l, r) = self.array?;
        let (lo, hi) = (l.min(r), l.max(r));
        (lo..=hi).contains(&index).then(|| self.slot + (index - lo) as usize)
    }

    /// Bit position of a declared bit index, `None` when out of range.
    pub fn bit_position(&self, index: i64) -> Option<u32> {
        let (msb, lsb) = self.packed;
        let pos = if msb >= lsb { index - lsb } else { lsb - index };
        (0..i64::from(self.width)).contains(&pos).then_some(pos as u32)
    }

    pub fn is_top_input(&self) -> bool {
        self.scope.is_empty() && self.port == Some(Direction::Input)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FKind {
    Const { value: u64, fill: bool },
    Sig(SigId),
    /// Array element, dynamic index.
    Elem { sig: SigId, index: Box<FExpr> },
    /// Bit-select; `index` is a declared bit index, `packed` maps it to a position.
    Bit { base: Box<FExpr>, index: Box<FExpr>, packed: (i64, i64) },
    /// Constant part-select, positions already normalized.
    Slice { base: Box<FExpr>, lo: u32 },
    Unary { op: UnaryOp, operand: Box<FExpr> },
    Binary { op: BinaryOp, lhs: Box<FExpr>, rhs: Box<FExpr> },
    Ternary { cond: Box<FExpr>, then: Box<FExpr>, els: Box<FExpr> },
    Concat(Vec<FExpr>),
    Replicate { count: u32, items: Vec<FExpr> },
    /// `$past`, `$rose`, `$fell`, `$stable` over a history slot.
    History { func: HistoryFn, operand: Box<FExpr>, depth: u32, slot: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HistoryFn {
    Past,
    Rose,
    Fell,
    Stable,
}

/// A flattened expression with its self-determined width.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FExpr {
    pub kind: FKind,
    pub width: u32,
}

impl FExpr {
    pub fn constant(value: u64, width: u32) -> Self {
        FExpr { kind: FKind::Const { value: value & ast::mask(width), fill: false }, width }
    }

    pub fn collect_sigs(&self, out: &mut BTreeSet<SigId>) {
        match &self.kind {
            FKind::Const { .. } => {}
            FKind::Sig(s) => {
                out.insert(*s);
            }
            FKind::Elem { sig, index } => {
                out.insert(*sig);
                index.collect_sigs(out);
            }
            FKind::Bit { base, index, .. } => {
                base.collect_sigs(out);
                index.collect_sigs(out);
            }
            FKind::Slice { base, .. } => base.collect_sigs(out),
            FKind::Unary { operand, .. } => operand.collect_sigs(out),
            FKind::Binary { lhs, rhs, .. } => {
                lhs.collect_sigs(out);
                rhs.collect_sigs(out);
            }
            FKind::Ternary { cond, then, els } => {
                cond.collect_sigs(out);
                then.collect_sigs(out);
                els.collect_sigs(out);
            }
            FKind::Concat(items) | FKind::Replicate { items, .. } => items.iter().for_each(|e| e.collect_sigs(out)),
            FKind::History { operand, .. } => operand.collect_sigs(out),
        }
    }

    pub fn sigs(&self) -> BTreeSet<SigId> {
        let mut s = BTreeSet::new();
        self.collect_sigs(&mut s);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Select {
    All,
    Bit { index: FExpr, packed: (i64, i64) },
    Range { lo: u32, width: u32 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Target { sig: SigId, elem: Option<FExpr>, select: Select },
    Concat(Vec<LValue>),
}

impl LValue {
    pub fn width(&self, d: &FlatDesign) -> u32 {
        self.width_in(&d.signals)
    }

    pub fn collect(&self, written: &mut BTreeSet<SigId>, read: &mut BTreeSet<SigId>) {
        match self {
            LValue::Target { sig, elem, select } => {
                written.insert(*sig);
                if let Some(e) = elem {
                    e.collect_sigs(read);
                }
                if let Select::Bit { index, .. } = select {
                    index.collect_sigs(read);
                }
            }
            LValue::Concat(items) => items.iter().for_each(|i| i.collect(written, read)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FStmt {
    Block(Vec<FStmt>),
    If { cond: FExpr, then: Box<FStmt>, els: Option<Box<FStmt>> },
    Case { subject: FExpr, arms: Vec<(Vec<FExpr>, FStmt)>, default: Option<Box<FStmt>> },
    Assign { lhs: LValue, rhs: FExpr, blocking: bool },
    Null,
}

impl FStmt {
    /// Walks every assignment with the signals read by its dominating
    /// conditions.
    pub fn for_each_assign(&self, conds: &mut Vec<BTreeSet<SigId>>, f: &mut dyn FnMut(&LValue, &FExpr, &[BTreeSet<SigId>])) {
        match self {
            FStmt::Block(items) => items.iter().for_each(|s| s.for_each_assign(conds, f)),
            FStmt::If { cond, then, els } => {
                conds.push(cond.sigs());
                then.for_each_assign(conds, f);
                if let Some(e) = els {
                    e.for_each_assign(conds, f);
                }
                conds.pop();
            }
            FStmt::Case { subject, arms, default } => {
                let mut s = subject.sigs();
                for (labels, _) in arms {
                    labels.iter().for_each(|l| l.collect_sigs(&mut s));
                }
                conds.push(s);
                for (_, body) in arms {
                    body.for_each_assign(conds, f);
                }
                if let Some(d) = default {
                    d.for_each_assign(conds, f);
                }
                conds.pop();
            }
            FStmt::Assign { lhs, rhs, .. } => f(lhs, rhs, conds),
            FStmt::Null => {}
        }
    }

    pub fn written(&self) -> BTreeSet<SigId> {
        let mut w = BTreeSet::new();
        self.for_each_assign(&mut Vec::new(), &mut |lhs, _, _| {
            lhs.collect(&mut w, &mut BTreeSet::new());
        });
        w
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Assign,
    Always,
    PortConnection,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AsyncControl {
    pub sig: SigId,
    /// Level at which the control is active (1 for posedge, 0 for negedge).
    pub active_high: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProcessKind {
    Comb,
    Seq { clock: (SigId, Edge), asyncs: Vec<AsyncControl> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Process {
    pub kind: ProcessKind,
    pub origin: Origin,
    pub scope: String,
    pub body: FStmt,
    pub writes: BTreeSet<SigId>,
    /// Source always block for clocked processes (used by flop inspection).
    pub source: Option<AlwaysBlock>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub module: String,
    pub params: BTreeMap<String, i64>,
}

/// The flattened design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatDesign {
    pub top: String,
    pub signals: Vec<Signal>,
    pub processes: Vec<Process>,
    /// Instance path (empty for top) to module and resolved parameters.
    pub instances: BTreeMap<String, InstanceInfo>,
    pub slot_count: usize,
    /// Comb process evaluation order; `None` when a combinational loop exists.
    pub comb_order: Option<Vec<usize>>,
    pub warnings: Vec<Diagnostic>,
    /// Signals written by more than one process (or top inputs written internally).
    pub multi_driven: BTreeSet<SigId>,
    by_path: HashMap<String, SigId>,
}

impl FlatDesign {
    pub fn lookup(&self, path: &str) -> Option<SigId> {
        self.by_path.get(path).copied()
    }

    pub fn signal(&self, path: &str) -> Option<&Signal> {
        self.lookup(path).map(|i| &self.signals[i])
    }

    /// Clock signals of all clocked processes, followed back through plain
    /// wire aliases (port connections, `assign a = b;`) to their source.
    pub fn clocks(&self) -> BTreeSet<SigId> {
        self.processes
            .iter()
            .filter_map(|p| match &p.kind {
                ProcessKind::Seq { clock, .. } => Some(self.alias_root(clock.0)),
                ProcessKind::Comb => None,
            })
            .collect()
    }

    /// Follows `sig = other` whole-signal copies back to the driving signal.
    pub fn alias_root(&self, mut sig: SigId) -> SigId {
        for _ in 0..self.signals.len() {
            let src = self.processes.iter().find_map(|p| match (&p.kind, &p.body) {
                (
                    ProcessKind::Comb,
                    FStmt::Assign { lhs: LValue::Target { sig: t, elem: None, select: Select::All }, rhs: FExpr { kind: FKind::Sig(r), .. }, .. },
                ) if *t == sig => Some(*r),
                _ => None,
            });
            match src {
                Some(r) => sig = r,
                None => break,
            }
        }
        sig
    }

    /// Top-level inputs that are not clocks, in declaration order.
    pub fn free_inputs(&self) -> Vec<SigId> {
        let clocks = self.clocks();
        self.signals.iter().enumerate().filter(|(i, s)| s.is_top_input() && !clocks.contains(i)).map(|(i, _)| i).collect()
    }

    /// Slots holding clocked state.
    pub fn state_slots(&self) -> Vec<usize> {
        let mut slots = BTreeSet::new();
        for p in &self.processes {
            if matches!(p.kind, ProcessKind::Seq { .. }) {
                for &s in &p.writes {
                    let sig = &self.signals[s];
                    slots.extend(sig.slot..sig.slot + sig.slots());
                }
            }
        }
        slots.into_iter().collect()
    }

    /// Human-readable name of a slot (`mem[2]` for array elements).
    pub fn slot_name(&self, slot: usize) -> String {
        for s in &self.signals {
            if (s.slot..s.slot + s.slots()).contains(&slot) {
                return match s.array {
                    Some((l, r)) => format!("{}[{}]", s.path, l.min(r) + (slot - s.slot) as i64),
                    None => s.path.clone(),
                };
            }
        }
        format!("<slot {slot}>")
    }

    /// All (name, slot, width) triples, arrays expanded per element.
    pub fn slot_names(&self) -> Vec<(String, usize, u32)> {
        let mut out = Vec::new();
        for s in &self.signals {
            match s.array {
                None => out.push((s.path.clone(), s.slot, s.width)),
                Some((l, r)) => {
                    let lo = l.min(r);
                    for k in 0..s.slots() {
                        out.push((format!("{}[{}]", s.path, lo + k as i64), s.slot + k, s.width));
                    }
                }
            }
        }
        out
    }
}

/// Flattens `top` and everything below it.
pub fn elaborate(unit: &SourceUnit, top: &str) -> Result<FlatDesign, ElabError> {
    crate::rtl::hierarchy_tree(unit, top)?;
    let m = unit.module(top).ok_or_else(|| RtlError::UnknownModule(top.to_string()))?;
    let params = resolve_module_parameters(m, &BTreeMap::new())?;
    let mut b = Builder { unit, signals: Vec::new(), processes: Vec::new(), by_path: HashMap::new(), instances: BTreeMap::new(), slot: 0, warnings: Vec::new() };
    b.instantiate(m, String::new(), params)?;
    b.finish(top)
}

struct Builder<'a> {
    unit: &'a SourceUnit,
    signals: Vec<Signal>,
    processes: Vec<Process>,
    by_path: HashMap<String, SigId>,
    instances: BTreeMap<String, InstanceInfo>,
    slot: usize,
    warnings: Vec<Diagnostic>,
}

fn join(scope: &str, name: &str) -> String {
    if scope.is_empty() {
        name.to_string()
    } else {
        format!("{scope}.{name}")
    }
}

/// Name resolution context for one instance.
pub struct Ctx<'b> {
    pub scope: String,
    pub params: BTreeMap<String, i64>,
    pub lookup: &'b dyn Fn(&str) -> Option<SigId>,
    pub signals: &'b [Signal],
    /// Handler for system function calls; designs have none.
    pub calls: Option<&'b dyn Fn(&Ctx, &str, &[Expr]) -> Result<FExpr, ElabError>>,
}

impl Ctx<'_> {
    pub fn const_eval(&self, e: &Expr) -> Result<i64, ElabError> {
        eval_const(e, &mut |n: &str| self.params.get(n).copied().ok_or(())).map_err(|err| match err {
            ConstError::Lookup(()) => ElabError::Unsupported(format!("'{e}' is not a constant expression")),
            ConstError::Other(d) => ElabError::Unsupported(d),
        })
    }

    fn resolve(&self, name: &str) -> Result<SigId, ElabError> {
        (self.lookup)(&join(&self.scope, name)).ok_or_else(|| ElabError::UnknownSignal(join(&self.scope, name)))
    }

    pub fn expr(&self, e: &Expr) -> Result<FExpr, ElabError> {
        Ok(match e {
            Expr::Literal(l) => {
                let width = l.width.unwrap_or(if l.value > u32::MAX as u64 { 64 } else { 32 });
                match l.form {
                    LitForm::Fill(b) => FExpr { kind: FKind::Const { value: u64::from(b), fill: b }, width: 1 },
                    _ => FExpr::constant(l.value, width),
                }
            }
            Expr::Ident { name, .. } => {
                if let Some(v) = self.params.get(name) {
                    return Ok(FExpr::constant(*v as u64, 32));
                }
                let id = self.resolve(name)?;
                let s = &self.signals[id];
                if s.array.is_some() {
                    return Err(ElabError::Unsupported(format!("whole-array reference to '{}'", s.path)));
                }
                FExpr { kind: FKind::Sig(id), width: s.width }
            }
            Expr::Index { base, index } => {
                let idx = self.expr(index)?;
                if let Expr::Ident { name, .. } = &**base {
                    if !self.params.contains_key(name) {
                        let id = self.resolve(name)?;
                        let s = &self.signals[id];
                        if s.array.is_some() {
                            return Ok(FExpr { kind: FKind::Elem { sig: id, index: Box::new(idx) }, width: s.width });
                        }
                        return Ok(FExpr { kind: FKind::Bit { base: Box::new(self.expr(base)?), index: Box::new(idx), packed: s.packed }, width: 1 });
                    }
                }
                let b = self.expr(base)?;
                let packed = (i64::from(b.width) - 1, 0);
                FExpr { kind: FKind::Bit { base: Box::new(b), index: Box::new(idx), packed }, width: 1 }
            }
            Expr::Slice { base, msb, lsb } => {
                let b = self.expr(base)?;
                let packed = match &b.kind {
                    FKind::Sig(id) => self.signals[*id].packed,
                    FKind::Elem { sig, .. } => self.signals[*sig].packed,
                    _ => (i64::from(b.width) - 1, 0),
                };
                let (m, l) = (self.const_eval(msb)?, self.const_eval(lsb)?);
                let pos = |i: i64| if packed.0 >= packed.1 { i - packed.1 } else { packed.1 - i };
                let (pm, pl) = (pos(m), pos(l));
                let (lo, hi) = (pm.min(pl), pm.max(pl));
                if lo < 0 || hi >= i64::from(b.width) {
                    return Err(ElabError::Unsupported(format!("part-select [{m}:{l}] out of range in '{e}'")));
                }
                FExpr { kind: FKind::Slice { base: Box::new(b), lo: lo as u32 }, width: (hi - lo + 1) as u32 }
            }
            Expr::Unary { op, operand } => {
                let o = self.expr(operand)?;
                let width = match op {
                    UnaryOp::Neg | UnaryOp::BitNot | UnaryOp::Plus => o.width,
                    _ => 1,
                };
                FExpr { kind: FKind::Unary { op: *op, operand: Box::new(o) }, width }
            }
            Expr::Binary { op, lhs, rhs } => {
                let (l, r) = (self.expr(lhs)?, self.expr(rhs)?);
                use BinaryOp::*;
                let width = match op {
                    Mul | Div | Mod | Add | Sub | BitAnd | BitOr | BitXor | BitXnor => l.width.max(r.width),
                    Shl | Shr => l.width,
                    _ => 1,
                };
                FExpr { kind: FKind::Binary { op: *op, lhs: Box::new(l), rhs: Box::new(r) }, width }
            }
            Expr::Ternary { cond, then, els } => {
                let (c, t, f) = (self.expr(cond)?, self.expr(then)?, self.expr(els)?);
                let width = t.width.max(f.width);
                FExpr { kind: FKind::Ternary { cond: Box::new(c), then: Box::new(t), els: Box::new(f) }, width }
            }
            Expr::Concat(items) => {
                let items = items.iter().map(|i| self.expr(i)).collect::<Result<Vec<_>, _>>()?;
                let width: u32 = items.iter().map(|i| i.width).sum();
                if width > MAX_WIDTH {
                    return Err(ElabError::Unsupported(format!("concatenation wider than {MAX_WIDTH} bits")));
                }
                FExpr { kind: FKind::Concat(items), width }
            }
            Expr::Replicate { count, items } => {
                let n = self.const_eval(count)?;
                let items = items.iter().map(|i| self.expr(i)).collect::<Result<Vec<_>, _>>()?;
                let w: i64 = items.iter().map(|i| i64::from(i.width)).sum::<i64>() * n;
                if n < 1 || w > i64::from(MAX_WIDTH) {
                    return Err(ElabError::Unsupported(format!("replication '{e}' has invalid width")));
                }
                FExpr { kind: FKind::Replicate { count: n as u32, items }, width: w as u32 }
            }
            Expr::Call { name, args } => match self.calls {
                Some(h) => h(self, name, args)?,
                None => return Err(ElabError::Unsupported(format!("system function {name} in design"))),
            },
        })
    }

    pub fn lvalue(&self, e: &Expr) -> Result<LValue, ElabError> {
        Ok(match e {
            Expr::Ident { name, .. } => {
                let id = self.resolve(name)?;
                if self.signals[id].array.is_some() {
                    return Err(ElabError::Unsupported(format!("whole-array assignment to '{}'", self.signals[id].path)));
                }
                LValue::Target { sig: id, elem: None, select: Select::All }
            }
            Expr::Index { base, index } => {
                let idx = self.expr(index)?;
                match &**base {
                    Expr::Ident { name, .. } => {
                        let id = self.resolve(name)?;
                        let s = &self.signals[id];
                        if s.array.is_some() {
                            LValue::Target { sig: id, elem: Some(idx), select: Select::All }
                        } else {
                            LValue::Target { sig: id, elem: None, select: Select::Bit { index: idx, packed: s.packed } }
                        }
                    }
                    Expr::Index { base: inner, index: elem } => {
                        let Expr::Ident { name, .. } = &**inner else {
                            return Err(ElabError::Unsupported(format!("assignment target '{e}'")));
                        };
                        let id = self.resolve(name)?;
                        let s = &self.signals[id];
                        if s.array.is_none() {
                            return Err(ElabError::Unsupported(format!("assignment target '{e}'")));
                        }
                        LValue::Target { sig: id, elem: Some(self.expr(elem)?), select: Select::Bit { index: idx, packed: s.packed } }
                    }
                    _ => return Err(ElabError::Unsupported(format!("assignment target '{e}'"))),
                }
            }
            Expr::Slice { base, msb, lsb } => {
                let (id, elem) = match &**base {
                    Expr::Ident { name, .. } => (self.resolve(name)?, None),
                    Expr::Index { base: inner, index } => match &**inner {
                        Expr::Ident { name, .. } => (self.resolve(name)?, Some(self.expr(index)?)),
                        _ => return Err(ElabError::Unsupported(format!("assignment target '{e}'"))),
                    },
                    _ => return Err(ElabError::Unsupported(format!("assignment target '{e}'"))),
                };
                let s = &self.signals[id];
                let (m, l) = (self.const_eval(msb)?, self.const_eval(lsb)?);
                let (pm, pl) = match (s.bit_position(m), s.bit_position(l)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(ElabError::Unsupported(format!("part-select [{m}:{l}] out of range in '{e}'"))),
                };
                let lo = pm.min(pl);
                LValue::Target { sig: id, elem, select: Select::Range { lo, width: pm.max(pl) - lo + 1 } }
            }
            Expr::Concat(items) => LValue::Concat(items.iter().map(|i| self.lvalue(i)).collect::<Result<_, _>>()?),
            other => return Err(ElabError::Unsupported(format!("'{other}' is not assignable"))),
        })
    }

    pub fn stmt(&self, s: &Stmt) -> Result<FStmt, ElabError> {
        Ok(match s {
            Stmt::Block { stmts, .. } => FStmt::Block(stmts.iter().map(|s| self.stmt(s)).collect::<Result<_, _>>()?),
            Stmt::If { cond, then, els } => FStmt::If {
                cond: self.expr(cond)?,
                then: Box::new(self.stmt(then)?),
                els: els.as_ref().map(|e| self.stmt(e).map(Box::new)).transpose()?,
            },
            Stmt::Case { subject, arms, default } => FStmt::Case {
                subject: self.expr(subject)?,
                arms: arms
                    .iter()
                    .map(|a| Ok((a.labels.iter().map(|l| self.expr(l)).collect::<Result<Vec<_>, ElabError>>()?, self.stmt(&a.body)?)))
                    .collect::<Result<_, ElabError>>()?,
                default: default.as_ref().map(|d| self.stmt(d).map(Box::new)).transpose()?,
            },
            Stmt::Assign { lhs, rhs, blocking, .. } => FStmt::Assign { lhs: self.lvalue(lhs)?, rhs: self.expr(rhs)?, blocking: *blocking },
            Stmt::Null => FStmt::Null,
        })
    }
}

impl Builder<'_> {
    fn instantiate(&mut self, m: &ModuleDecl, scope: String, params: BTreeMap<String, i64>) -> Result<(), ElabError> {
        self.instances.insert(scope.clone(), InstanceInfo { module: m.name.clone(), params: params.clone() });
        let const_ctx = |e: &Expr| -> Result<i64, ElabError> {
            eval_const(e, &mut |n: &str| params.get(n).copied().ok_or(())).map_err(|_| ElabError::Unsupported(format!("non-constant range '{e}'")))
        };
        // Which names are written by always blocks (for reg/wire classification).
        let mut procedural: BTreeSet<&str> = BTreeSet::new();
        for a in m.always_blocks() {
            procedural.extend(a.assigned_signals.iter().map(String::as_str));
        }
        for d in m.declared_signals() {
            let packed = match d.range {
                Some(r) => (const_ctx(&r.msb)?, const_ctx(&r.lsb)?),
                None => (0, 0),
            };
            let width = (packed.0 - packed.1).unsigned_abs() + 1;
            if width > u64::from(MAX_WIDTH) {
                return Err(ElabError::Unsupported(format!("signal '{}' wider than {MAX_WIDTH} bits", join(&scope, d.name))));
            }
            let array = match d.unpacked {
                Some(r) => Some((const_ctx(&r.msb)?, const_ctx(&r.lsb)?)),
                None => None,
            };
            let kind = match d.port {
                Some(Direction::Input) => SignalKind::Input,
                _ if procedural.contains(d.name) || d.net == NetKind::Reg => SignalKind::Reg,
                Some(_) => SignalKind::Output,
                None => SignalKind::Wire,
            };
            if d.port == Some(Direction::Inout) {
                return Err(ElabError::Unsupported(format!("inout port '{}'", join(&scope, d.name))));
            }
            let sig = Signal { path: join(&scope, d.name), width: width as u32, kind, port: d.port, packed, array, slot: self.slot, scope: scope.clone() };
            self.slot += sig.slots();
            self.by_path.insert(sig.path.clone(), self.signals.len());
            self.signals.push(sig);
        }

        // Children first so their ports exist before connections are built.
        for inst in m.instances() {
            let child_scope = join(&scope, &inst.instance_name);
            let Some(target) = self.unit.module(&inst.target) else {
                return Err(ElabError::UnresolvedTarget { path: child_scope, target: inst.target.clone() });
            };
            let mut overrides = BTreeMap::new();
            for (n, v) in &inst.param_overrides {
                overrides.insert(n.clone(), const_ctx(v)?);
            }
            let child_params = resolve_module_parameters(target, &overrides)?;
            self.instantiate(target, child_scope, child_params)?;
        }

        let signals = std::mem::take(&mut self.signals);
        let by_path = std::mem::take(&mut self.by_path);
        let lookup = |p: &str| by_path.get(p).copied();
        let ctx = Ctx { scope: scope.clone(), params: params.clone(), lookup: &lookup, signals: &signals, calls: None };
        let mut procs = Vec::new();
        let mut warnings = Vec::new();
        for item in &m.items {
            match item {
                ModuleItem::Net(_) => {}
                ModuleItem::Assign(a) => {
                    let body = FStmt::Assign { lhs: ctx.lvalue(&a.lhs)?, rhs: ctx.expr(&a.rhs)?, blocking: true };
                    procs.push(Process { kind: ProcessKind::Comb, origin: Origin::Assign, scope: scope.clone(), writes: body.written(), body, source: None });
                }
                ModuleItem::Always(a) => {
                    let body = ctx.stmt(&a.body)?;
                    let kind = match &a.sensitivity {
                        Sensitivity::Star => ProcessKind::Comb,
                        Sensitivity::Edges(evs) => {
                            let referenced = a.read_signals.clone();
                            let mut clock = None;
                            let mut asyncs = Vec::new();
                            for ev in evs {
                                let id = ctx.resolve(&ev.signal)?;
                                if referenced.contains(&ev.signal) {
                                    asyncs.push(AsyncControl { sig: id, active_high: ev.edge == Edge::Pos });
                                } else if clock.is_some() {
                                    return Err(ElabError::Unsupported(format!(
                                        "always block in '{}' has more than one clock edge",
                                        if scope.is_empty() { &m.name } else { &scope }
                                    )));
                                } else {
                                    clock = Some((id, ev.edge));
                                }
                            }
                            let clock = clock.ok_or_else(|| ElabError::Unsupported(format!("always block in '{}' has no clock edge", m.name)))?;
                            ProcessKind::Seq { clock, asyncs }
                        }
                    };
                    procs.push(Process { kind, origin: Origin::Always, scope: scope.clone(), writes: body.written(), body, source: Some(a.clone()) });
                }
                ModuleItem::Instance(inst) => {
                    let child_scope = join(&scope, &inst.instance_name);
                    let target = self.unit.module(&inst.target).expect("checked above");
                    for c in &inst.connections {
                        let Some(actual) = &c.actual else { continue };
                        let port = target.port(&c.formal).expect("validated");
                        let child_id = by_path[&join(&child_scope, &c.formal)];
                        let child_width = signals[child_id].width;
                        let body = match port.direction {
                            Direction::Input => {
                                let rhs = ctx.expr(actual)?;
                                if rhs.width != child_width && !matches!(actual, Expr::Literal(_)) {
                                    warnings.push(Diagnostic::warning(
                                        &inst.span,
                                        format!("width mismatch on '{}.{}': port is {} bits, connection is {} bits", child_scope, c.formal, child_width, rhs.width),
                                    ));
                                }
                                FStmt::Assign { lhs: LValue::Target { sig: child_id, elem: None, select: Select::All }, rhs, blocking: true }
                            }
                            Direction::Output => {
                                let lhs = ctx.lvalue(actual)?;
                                let lw = lhs.width_in(&signals);
                                if lw != child_width {
                                    warnings.push(Diagnostic::warning(
                                        &inst.span,
                                        format!("width mismatch on '{}.{}': port is {} bits, connection is {} bits", child_scope, c.formal, child_width, lw),
                                    ));
                                }
                                FStmt::Assign { lhs, rhs: FExpr { kind: FKind::Sig(child_id), width: child_width }, blocking: true }
                            }
                            Direction::Inout => return Err(ElabError::Unsupported(format!("inout port '{}.{}'", child_scope, c.formal))),
                        };
                        procs.push(Process { kind: ProcessKind::Comb, origin: Origin::PortConnection, scope: scope.clone(), writes: body.written(), body, source: None });
                    }
                }
            }
        }
        self.signals = signals;
        self.by_path = by_path;
        self.processes.extend(procs);
        self.warnings.extend(warnings);
        Ok(())
    }

    fn finish(self, top: &str) -> Result<FlatDesign, ElabError> {
        // Multiple drivers are recorded rather than rejected so structural
        // queries still work; the checker refuses such designs.
        let mut driver: HashMap<SigId, usize> = HashMap::new();
        let mut multi_driven = BTreeSet::new();
        for (pi, p) in self.processes.iter().enumerate() {
            for &s in &p.writes {
                if let Some(prev) = driver.insert(s, pi) {
                    if prev != pi {
                        multi_driven.insert(s);
                    }
                }
            }
        }
        for (i, s) in self.signals.iter().enumerate() {
            if s.is_top_input() && driver.contains_key(&i) {
                multi_driven.insert(i);
            }
        }
        let comb: Vec<usize> = (0..self.processes.len()).filter(|i| self.processes[*i].kind == ProcessKind::Comb).collect();
        let comb_order = topo_order(&self.processes, &comb);
        let mut d = FlatDesign {
            top: top.to_string(),
            signals: self.signals,
            processes: self.processes,
            instances: self.instances,
            slot_count: self.slot,
            comb_order,
            warnings: self.warnings,
            multi_driven,
            by_path: self.by_path,
        };
        if d.comb_order.is_none() {
            d.warnings.push(Diagnostic {
                file: top.to_string(),
                line: 0,
                col: 0,
                severity: crate::diag::Severity::Warning,
                message: "combinational loop detected; settling by iteration".into(),
            });
        }
        Ok(d)
    }
}

impl LValue {
    fn width_in(&self, sigs: &[Signal]) -> u32 {
        match self {
            LValue::Target { sig, select, .. } => match select {
                Select::All => sigs[*sig].width,
                Select::Bit { .. } => 1,
                Select::Range { width, .. } => *width,
            },
            LValue::Concat(items) => items.iter().map(|i| i.width_in(sigs)).sum(),
        }
    }
}

fn topo_order(procs: &[Process], comb: &[usize]) -> Option<Vec<usize>> {
    let mut writer: HashMap<SigId, usize> = HashMap::new();
    for &pi in comb {
        for &s in &procs[pi].writes {
            writer.insert(s, pi);
        }
    }
    let mut deps: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &pi in comb {
        let mut reads = BTreeSet::new();
        procs[pi].body.for_each_assign(&mut Vec::new(), &mut |lhs, rhs, conds| {
            rhs.collect_sigs(&mut reads);
            conds.iter().for_each(|c| reads.extend(c.iter().copied()));
            lhs.collect(&mut BTreeSet::new(), &mut reads);
        });
        let d: BTreeSet<usize> = reads.iter().filter_map(|s| writer.get(s).copied()).filter(|w| *w != pi).collect();
        deps.insert(pi, d);
    }
    let mut order = Vec::new();
    let mut done = BTreeSet::new();
    while order.len() < comb.len() {
        let ready: Vec<usize> = comb.iter().copied().filter(|p| !done.contains(p) && deps[p].iter().all(|d| done.contains(d))).collect();
        if ready.is_empty() {
            return None;
        }
        for r in ready {
            done.insert(r);
            order.push(r);
        }
    }
    Some(order)
}
