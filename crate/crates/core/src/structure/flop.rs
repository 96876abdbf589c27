use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::rtl::ast::{AlwaysBlock, Edge, Expr, Sensitivity, Stmt, UnaryOp, BinaryOp};
use crate::rtl::params::eval_const;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    ActiveHigh,
    ActiveLow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResetKind {
    Sync,
    Async,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetInfo {
    pub signal: String,
    pub polarity: Polarity,
    pub kind: ResetKind,
    pub value: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopInfo {
    pub clock: String,
    pub edge: Edge,
    pub reset: Option<ResetInfo>,
    /// Right-hand side(s) driving the register outside the reset branch.
    pub data_input: String,
}

/// Strips `begin`/`end` wrappers around a single statement and returns the
/// first statement of the body.
fn first_stmt(s: &Stmt) -> &Stmt {
    match s {
        Stmt::Block { stmts, .. } if !stmts.is_empty() => first_stmt(&stmts[0]),
        other => other,
    }
}

/// Recognizes `sig`, `!sig`, `~sig`, `sig == c`, `sig != c` on a 1-bit test.
fn reset_test(cond: &Expr) -> Option<(&str, Polarity)> {
    match cond {
        Expr::Ident { name, .. } => Some((name, Polarity::ActiveHigh)),
        Expr::Unary { op: UnaryOp::Not | UnaryOp::BitNot, operand } => match &**operand {
            Expr::Ident { name, .. } => Some((name, Polarity::ActiveLow)),
            _ => None,
        },
        Expr::Binary { op: op @ (BinaryOp::Eq | BinaryOp::Ne), lhs, rhs } => {
            let (Expr::Ident { name, .. }, Expr::Literal(l)) = (&**lhs, &**rhs) else { return None };
            let high = (l.value != 0) == (*op == BinaryOp::Eq);
            Some((name, if high { Polarity::ActiveHigh } else { Polarity::ActiveLow }))
        }
        _ => None,
    }
}

/// Assignments to `reg` in `s`, as (rhs) expressions.
fn assignments_to<'a>(s: &'a Stmt, reg: &str, out: &mut Vec<&'a Expr>) {
    match s {
        Stmt::Block { stmts, .. } => stmts.iter().for_each(|s| assignments_to(s, reg, out)),
        Stmt::If { then, els, .. } => {
            assignments_to(then, reg, out);
            if let Some(e) = els {
                assignments_to(e, reg, out);
            }
        }
        Stmt::Case { arms, default, .. } => {
            arms.iter().for_each(|a| assignments_to(&a.body, reg, out));
            if let Some(d) = default {
                assignments_to(d, reg, out);
            }
        }
        Stmt::Assign { lhs, rhs, .. } => {
            let mut w = BTreeSet::new();
            lhs.collect_lvalue(&mut w, &mut BTreeSet::new());
            if w.contains(reg) {
                out.push(rhs);
            }
        }
        Stmt::Null => {}
    }
}

fn summarize(rhs: &[&Expr]) -> String {
    let mut seen = Vec::new();
    for r in rhs {
        let t = r.to_string();
        if !seen.contains(&t) {
            seen.push(t);
        }
    }
    seen.join(" | ")
}

/// Classifies one register of a clocked block.
///
/// The reset branch is the block's first `if` when its condition tests a
/// single signal (or its negation) and the branch assigns `reg` a constant.
/// The reset is asynchronous iff that signal is in the edge list.
pub(crate) fn classify(
    block: &AlwaysBlock,
    reg: &str,
    clock: (String, Edge),
    scope: &str,
    params: &BTreeMap<String, i64>,
) -> FlopInfo {
    let qualify = |n: &str| if scope.is_empty() { n.to_string() } else { format!("{scope}.{n}") };
    let edges: Vec<&str> = match &block.sensitivity {
        Sensitivity::Edges(evs) => evs.iter().map(|e| e.signal.as_str()).collect(),
        Sensitivity::Star => Vec::new(),
    };
    let mut reset = None;
    let mut data_stmt = &block.body;
    if let Stmt::If { cond, then, els } = first_stmt(&block.body) {
        if let Some((sig, polarity)) = reset_test(cond) {
            let mut rst_rhs = Vec::new();
            assignments_to(then, reg, &mut rst_rhs);
            let folded: Option<u64> = match rst_rhs.as_slice() {
                [one] => eval_const(one, &mut |n: &str| params.get(n).copied().ok_or(())).ok().map(|v| v as u64),
                _ => None,
            };
            if let Some(value) = folded {
                let kind = if edges.contains(&sig) { ResetKind::Async } else { ResetKind::Sync };
                reset = Some(ResetInfo { signal: qualify(sig), polarity, kind, value });
                data_stmt = els.as_deref().unwrap_or(&Stmt::Null);
            }
        }
    }
    let mut data = Vec::new();
    assignments_to(data_stmt, reg, &mut data);
    FlopInfo { clock: clock.0, edge: clock.1, reset, data_input: summarize(&data) }
}
