use std::collections::{BTreeMap, HashMap};

use crate::rtl::ast::{BinaryOp, Expr, ModuleDecl, ParamKind, SourceUnit, UnaryOp};
use crate::rtl::RtlError;

/// Resolves every parameter and localparam of `module_name` to an integer.
/// Overrides win over declared defaults; localparams cannot be overridden.
pub fn resolve_parameters(
    unit: &SourceUnit,
    module_name: &str,
    overrides: &BTreeMap<String, i64>,
) -> Result<BTreeMap<String, i64>, RtlError> {
    let m = unit.module(module_name).ok_or_else(|| RtlError::UnknownModule(module_name.to_string()))?;
    resolve_module_parameters(m, overrides)
}

pub fn resolve_module_parameters(m: &ModuleDecl, overrides: &BTreeMap<String, i64>) -> Result<BTreeMap<String, i64>, RtlError> {
    for name in overrides.keys() {
        match m.params.iter().find(|p| &p.name == name) {
            None => {
                return Err(RtlError::UnknownParameter { module: m.name.clone(), name: name.clone() });
            }
            Some(p) if p.kind == ParamKind::Localparam => {
                return Err(RtlError::LocalparamOverride { module: m.name.clone(), name: name.clone() });
            }
            Some(_) => {}
        }
    }
    let decls: HashMap<&str, &Expr> = m.params.iter().map(|p| (p.name.as_str(), &p.value)).collect();
    let mut state = Resolver { module: &m.name, decls, overrides, done: BTreeMap::new(), stack: Vec::new() };
    for p in &m.params {
        state.resolve(&p.name)?;
    }
    Ok(state.done)
}

struct Resolver<'a> {
    module: &'a str,
    decls: HashMap<&'a str, &'a Expr>,
    overrides: &'a BTreeMap<String, i64>,
    done: BTreeMap<String, i64>,
    stack: Vec<String>,
}

impl Resolver<'_> {
    fn resolve(&mut self, name: &str) -> Result<i64, RtlError> {
        if let Some(v) = self.done.get(name) {
            return Ok(*v);
        }
        if let Some(v) = self.overrides.get(name) {
            self.done.insert(name.to_string(), *v);
            return Ok(*v);
        }
        if let Some(pos) = self.stack.iter().position(|n| n == name) {
            let mut cycle: Vec<String> = self.stack[pos..].to_vec();
            cycle.push(name.to_string());
            return Err(RtlError::CircularParameter { module: self.module.to_string(), cycle: cycle.join(" -> ") });
        }
        let expr = *self.decls.get(name).ok_or_else(|| RtlError::NonConstant {
            module: self.module.to_string(),
            detail: format!("'{name}' is not a parameter"),
        })?;
        self.stack.push(name.to_string());
        let module = self.module.to_string();
        let v = eval_const(expr, &mut |n| self.resolve(n)).map_err(|e| match e {
            ConstError::Lookup(e) => e,
            ConstError::Other(detail) => RtlError::NonConstant { module: module.clone(), detail },
        })?;
        self.stack.pop();
        self.done.insert(name.to_string(), v);
        Ok(v)
    }
}

pub enum ConstError<E> {
    Lookup(E),
    Other(String),
}

/// Folds an integer constant expression. `lookup` resolves identifiers.
pub fn eval_const<E>(e: &Expr, lookup: &mut dyn FnMut(&str) -> Result<i64, E>) -> Result<i64, ConstError<E>> {
    Ok(match e {
        Expr::Literal(l) => l.value as i64,
        Expr::Ident { name, .. } => lookup(name).map_err(ConstError::Lookup)?,
        Expr::Unary { op, operand } => {
            let v = eval_const(operand, lookup)?;
            match op {
                UnaryOp::Neg => v.wrapping_neg(),
                UnaryOp::Plus => v,
                UnaryOp::Not => i64::from(v == 0),
                UnaryOp::BitNot => !v,
                _ => return Err(ConstError::Other(format!("reduction operator '{}' in constant expression", op.symbol()))),
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let a = eval_const(lhs, lookup)?;
            let b = eval_const(rhs, lookup)?;
            use BinaryOp::*;
            match op {
                Add => a.wrapping_add(b),
                Sub => a.wrapping_sub(b),
                Mul => a.wrapping_mul(b),
                Div | Mod if b == 0 => return Err(ConstError::Other("division by zero in constant expression".into())),
                Div => a / b,
                Mod => a % b,
                Shl => a.checked_shl(b as u32).unwrap_or(0),
                Shr => a.checked_shr(b as u32).unwrap_or(0),
                Lt => i64::from(a < b),
                Le => i64::from(a <= b),
                Gt => i64::from(a > b),
                Ge => i64::from(a >= b),
                Eq | CaseEq => i64::from(a == b),
                Ne | CaseNe => i64::from(a != b),
                BitAnd => a & b,
                BitOr => a | b,
                BitXor => a ^ b,
                BitXnor => !(a ^ b),
                LogAnd => i64::from(a != 0 && b != 0),
                LogOr => i64::from(a != 0 || b != 0),
            }
        }
        Expr::Ternary { cond, then, els } => {
            if eval_const(cond, lookup)? != 0 {
                eval_const(then, lookup)?
            } else {
                eval_const(els, lookup)?
            }
        }
        other => return Err(ConstError::Other(format!("'{other}' is not a constant expression"))),
    })
}
