//! Cross-module checks run after every file has parsed.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::diag::{Diagnostic, Span};
use crate::rtl::ast::*;

/// Rewrites positional connections and parameter overrides to named form
/// using the target module's declaration order.
pub fn resolve_positional(modules: &mut [ModuleDecl], diags: &mut Vec<Diagnostic>) {
    let sigs: HashMap<String, (Vec<String>, Vec<String>)> = modules
        .iter()
        .map(|m| {
            let ports = m.ports.iter().map(|p| p.name.clone()).collect();
            let params = m.params.iter().filter(|p| p.kind == ParamKind::Parameter).map(|p| p.name.clone()).collect();
            (m.name.clone(), (ports, params))
        })
        .collect();
    for m in modules.iter_mut() {
        for item in &mut m.items {
            let ModuleItem::Instance(inst) = item else { continue };
            let positional = |s: &str| s.strip_prefix('#').and_then(|n| n.parse::<usize>().ok());
            let has_positional = inst.connections.iter().any(|c| positional(&c.formal).is_some())
                || inst.param_overrides.iter().any(|(n, _)| positional(n).is_some());
            if !has_positional {
                continue;
            }
            let Some((ports, params)) = sigs.get(&inst.target) else {
                diags.push(Diagnostic::error(
                    &inst.span,
                    format!("positional connections to unresolved module '{}'", inst.target),
                ));
                continue;
            };
            for c in &mut inst.connections {
                if let Some(i) = positional(&c.formal) {
                    match ports.get(i) {
                        Some(p) => c.formal = p.clone(),
                        None => diags.push(Diagnostic::error(
                            &inst.span,
                            format!("too many positional connections for module '{}'", inst.target),
                        )),
                    }
                }
            }
            for (n, _) in &mut inst.param_overrides {
                if let Some(i) = positional(n) {
                    match params.get(i) {
                        Some(p) => *n = p.clone(),
                        None => diags.push(Diagnostic::error(
                            &inst.span,
                            format!("too many positional parameter overrides for module '{}'", inst.target),
                        )),
                    }
                }
            }
        }
    }
}

struct Scope<'a> {
    signals: HashMap<&'a str, DeclaredSignal<'a>>,
    params: BTreeSet<&'a str>,
}

pub fn validate_unit(unit: &SourceUnit, diags: &mut Vec<Diagnostic>) {
    let mut seen: HashMap<&str, &Span> = HashMap::new();
    for m in &unit.modules {
        if let Some(prev) = seen.insert(&m.name, &m.span) {
            diags.push(Diagnostic::error(
                &m.span,
                format!("duplicate module name '{}' (first declared at {prev})", m.name),
            ));
        }
    }
    for m in &unit.modules {
        validate_module(unit, m, diags);
    }
}

fn validate_module(unit: &SourceUnit, m: &ModuleDecl, diags: &mut Vec<Diagnostic>) {
    let mut names: BTreeMap<&str, &Span> = BTreeMap::new();
    let dup = |name: &'_ str, span: &Span, diags: &mut Vec<Diagnostic>| {
        diags.push(Diagnostic::error(span, format!("duplicate declaration of '{name}' in module '{}'", m.name)));
    };
    let mut params = BTreeSet::new();
    for p in &m.params {
        if names.insert(&p.name, &p.span).is_some() {
            dup(&p.name, &p.span, diags);
        }
        params.insert(p.name.as_str());
    }
    let mut signals = HashMap::new();
    for s in m.declared_signals() {
        if names.insert(s.name, s.span).is_some() {
            dup(s.name, s.span, diags);
        }
        signals.insert(s.name, s);
    }
    for inst in m.instances() {
        if names.insert(&inst.instance_name, &inst.span).is_some() {
            dup(&inst.instance_name, &inst.span, diags);
        }
    }
    let scope = Scope { signals, params };

    // Width expressions may only use parameters and literals.
    let check_const = |e: &Expr, what: &str, span: &Span, diags: &mut Vec<Diagnostic>| {
        for r in e.reads() {
            if !scope.params.contains(r.as_str()) {
                diags.push(Diagnostic::error(span, format!("{what} references '{r}', which is not a parameter of '{}'", m.name)));
            }
        }
    };
    for s in scope.signals.values() {
        for r in s.range.iter().chain(s.unpacked.iter()) {
            check_const(&r.msb, "range", s.span, diags);
            check_const(&r.lsb, "range", s.span, diags);
        }
    }
    for p in &m.params {
        check_const(&p.value, "parameter value", &p.span, diags);
    }

    for item in &m.items {
        match item {
            ModuleItem::Net(_) => {}
            ModuleItem::Assign(a) => {
                check_expr(&scope, &a.lhs, &a.span, diags);
                check_expr(&scope, &a.rhs, &a.span, diags);
            }
            ModuleItem::Always(a) => {
                if let Sensitivity::Edges(evs) = &a.sensitivity {
                    for ev in evs {
                        if !scope.signals.contains_key(ev.signal.as_str()) {
                            diags.push(Diagnostic::error(&a.span, format!("undeclared identifier '{}'", ev.signal)));
                        }
                    }
                }
                check_stmt(&scope, &a.body, &a.span, diags);
            }
            ModuleItem::Instance(inst) => {
                for c in &inst.connections {
                    if let Some(e) = &c.actual {
                        check_expr(&scope, e, &inst.span, diags);
                    }
                }
                for (_, v) in &inst.param_overrides {
                    check_const(v, "parameter override", &inst.span, diags);
                }
                let mut formals = BTreeSet::new();
                for c in &inst.connections {
                    if !formals.insert(c.formal.as_str()) {
                        diags.push(Diagnostic::error(&inst.span, format!("port '{}' connected more than once on '{}'", c.formal, inst.instance_name)));
                    }
                }
                if let Some(target) = unit.module(&inst.target) {
                    for c in &inst.connections {
                        if target.port(&c.formal).is_none() && !c.formal.starts_with('#') {
                            diags.push(Diagnostic::error(&inst.span, format!("module '{}' has no port '{}'", target.name, c.formal)));
                        }
                    }
                    let mut overridden = BTreeSet::new();
                    for (n, _) in &inst.param_overrides {
                        if !overridden.insert(n.as_str()) {
                            diags.push(Diagnostic::error(&inst.span, format!("parameter '{n}' overridden more than once")));
                        }
                        match target.params.iter().find(|p| &p.name == n) {
                            Some(p) if p.kind == ParamKind::Localparam => diags.push(Diagnostic::error(
                                &inst.span,
                                format!("cannot override localparam '{n}' of module '{}'", target.name),
                            )),
                            Some(_) => {}
                            None if n.starts_with('#') => {}
                            None => diags.push(Diagnostic::error(&inst.span, format!("module '{}' has no parameter '{n}'", target.name))),
                        }
                    }
                }
            }
        }
    }
}

fn check_stmt(scope: &Scope<'_>, s: &Stmt, span: &Span, diags: &mut Vec<Diagnostic>) {
    match s {
        Stmt::Block { stmts, .. } => stmts.iter().for_each(|s| check_stmt(scope, s, span, diags)),
        Stmt::If { cond, then, els } => {
            check_expr(scope, cond, span, diags);
            check_stmt(scope, then, span, diags);
            if let Some(e) = els {
                check_stmt(scope, e, span, diags);
            }
        }
        Stmt::Case { subject, arms, default } => {
            check_expr(scope, subject, span, diags);
            for a in arms {
                a.labels.iter().for_each(|l| check_expr(scope, l, span, diags));
                check_stmt(scope, &a.body, span, diags);
            }
            if let Some(d) = default {
                check_stmt(scope, d, span, diags);
            }
        }
        Stmt::Assign { lhs, rhs, span, .. } => {
            check_expr(scope, lhs, span, diags);
            check_expr(scope, rhs, span, diags);
        }
        Stmt::Null => {}
    }
}

fn is_array(scope: &Scope<'_>, e: &Expr) -> bool {
    matches!(e, Expr::Ident { name, .. } if scope.signals.get(name.as_str()).is_some_and(|s| s.unpacked.is_some()))
}

fn check_expr(scope: &Scope<'_>, e: &Expr, span: &Span, diags: &mut Vec<Diagnostic>) {
    match e {
        Expr::Ident { name, span: ispan } => {
            let at = if ispan.line > 0 { ispan } else { span };
            if !scope.signals.contains_key(name.as_str()) && !scope.params.contains(name.as_str()) {
                diags.push(Diagnostic::error(at, format!("undeclared identifier '{name}'")));
            } else if is_array(scope, e) {
                diags.push(Diagnostic::error(at, format!("unsupported construct: whole-array reference to '{name}'")));
            }
        }
        Expr::Slice { base, msb, lsb } => {
            if is_array(scope, base) {
                let (name, at) = match &**base {
                    Expr::Ident { name, span } => (name.as_str(), span),
                    _ => unreachable!(),
                };
                diags.push(Diagnostic::error(at, format!("unsupported construct: part-select of unpacked array '{name}'")));
            } else {
                check_expr(scope, base, span, diags);
            }
            check_expr(scope, msb, span, diags);
            check_expr(scope, lsb, span, diags);
        }
        Expr::Index { base, index } => {
            if !is_array(scope, base) {
                check_expr(scope, base, span, diags);
            }
            check_expr(scope, index, span, diags);
        }
        Expr::Literal(_) => {}
        Expr::Unary { operand, .. } => check_expr(scope, operand, span, diags),
        Expr::Binary { lhs, rhs, .. } => {
            check_expr(scope, lhs, span, diags);
            check_expr(scope, rhs, span, diags);
        }
        Expr::Ternary { cond, then, els } => {
            check_expr(scope, cond, span, diags);
            check_expr(scope, then, span, diags);
            check_expr(scope, els, span, diags);
        }
        Expr::Concat(items) => items.iter().for_each(|e| check_expr(scope, e, span, diags)),
        Expr::Replicate { count, items } => {
            check_expr(scope, count, span, diags);
            items.iter().for_each(|e| check_expr(scope, e, span, diags));
        }
        Expr::Call { name, .. } => {
            diags.push(Diagnostic::error(span, format!("unsupported construct: system function {name}")));
        }
    }
}
