//! Syntax tree for the supported SystemVerilog subset.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diag::Span;

pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceUnit {
    pub modules: Vec<ModuleDecl>,
}

impl SourceUnit {
    pub fn module(&self, name: &str) -> Option<&ModuleDecl> {
        self.modules.iter().find(|m| m.name == name)
    }

    /// True when the instance's target is not defined in this unit.
    pub fn is_external(&self, inst: &InstanceDecl) -> bool {
        self.module(&inst.target).is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Input,
    Output,
    Inout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetKind {
    Wire,
    Reg,
    Logic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Parameter,
    Localparam,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Range {
    pub msb: Expr,
    pub lsb: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub direction: Direction,
    pub net: NetKind,
    pub range: Option<Range>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Expr,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleDecl {
    pub name: String,
    pub params: Vec<Param>,
    pub ports: Vec<Port>,
    pub items: Vec<ModuleItem>,
    pub span: Span,
}

impl ModuleDecl {
    pub fn port(&self, name: &str) -> Option<&Port> {
        self.ports.iter().find(|p| p.name == name)
    }

    pub fn instances(&self) -> impl Iterator<Item = &InstanceDecl> {
        self.items.iter().filter_map(|i| match i {
            ModuleItem::Instance(inst) => Some(inst),
            _ => None,
        })
    }

    pub fn always_blocks(&self) -> impl Iterator<Item = &AlwaysBlock> {
        self.items.iter().filter_map(|i| match i {
            ModuleItem::Always(a) => Some(a),
            _ => None,
        })
    }

    pub fn assigns(&self) -> impl Iterator<Item = &AssignStmt> {
        self.items.iter().filter_map(|i| match i {
            ModuleItem::Assign(a) => Some(a),
            _ => None,
        })
    }

    /// Every signal declared in the module: ports first, then nets.
    pub fn declared_signals(&self) -> Vec<DeclaredSignal<'_>> {
        let mut out: Vec<DeclaredSignal<'_>> = self
            .ports
            .iter()
            .map(|p| DeclaredSignal { name: &p.name, net: p.net, range: p.range.as_ref(), unpacked: None, port: Some(p.direction), span: &p.span })
            .collect();
        for item in &self.items {
            if let ModuleItem::Net(n) = item {
                for d in &n.names {
                    out.push(DeclaredSignal {
                        name: &d.name,
                        net: n.net,
                        range: n.range.as_ref(),
                        unpacked: d.unpacked.as_ref(),
                        port: None,
                        span: &d.span,
                    });
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DeclaredSignal<'a> {
    pub name: &'a str,
    pub net: NetKind,
    pub range: Option<&'a Range>,
    pub unpacked: Option<&'a Range>,
    pub port: Option<Direction>,
    pub span: &'a Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuleItem {
    Net(NetDecl),
    Always(AlwaysBlock),
    Instance(InstanceDecl),
    Assign(AssignStmt),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclName {
    pub name: String,
    pub unpacked: Option<Range>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDecl {
    pub net: NetKind,
    pub range: Option<Range>,
    pub names: Vec<DeclName>,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    Pos,
    Neg,
}

impl Edge {
    pub fn keyword(self) -> &'static str {
        match self {
            Edge::Pos => "posedge",
            Edge::Neg => "negedge",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeEvent {
    pub edge: Edge,
    pub signal: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sensitivity {
    Edges(Vec<EdgeEvent>),
    Star,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlwaysKind {
    Always,
    AlwaysFf,
    AlwaysComb,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlwaysBlock {
    pub kind: AlwaysKind,
    pub sensitivity: Sensitivity,
    pub body: Stmt,
    /// Names written anywhere in `body`.
    pub assigned_signals: BTreeSet<String>,
    /// Names read anywhere in `body` (conditions, right-hand sides, indices).
    pub read_signals: BTreeSet<String>,
    pub span: Span,
}

impl AlwaysBlock {
    pub fn new(kind: AlwaysKind, sensitivity: Sensitivity, body: Stmt, span: Span) -> Self {
        let mut assigned = BTreeSet::new();
        let mut read = BTreeSet::new();
        body.collect_names(&mut assigned, &mut read);
        AlwaysBlock { kind, sensitivity, body, assigned_signals: assigned, read_signals: read, span }
    }

    pub fn is_clocked(&self) -> bool {
        matches!(self.sensitivity, Sensitivity::Edges(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub formal: String,
    /// `None` for an explicitly unconnected port, `.p()`.
    pub actual: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceDecl {
    pub target: String,
    pub instance_name: String,
    pub param_overrides: Vec<(String, Expr)>,
    pub connections: Vec<Connection>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignStmt {
    pub lhs: Expr,
    pub rhs: Expr,
    pub span: Span,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LitBase {
    Bin,
    Oct,
    Dec,
    Hex,
}

impl LitBase {
    pub fn radix(self) -> u32 {
        match self {
            LitBase::Bin => 2,
            LitBase::Oct => 8,
            LitBase::Dec => 10,
            LitBase::Hex => 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LitForm {
    /// `42`
    Plain,
    /// `8'hff`, `'d0`
    Based(LitBase),
    /// `'0` / `'1`: every bit of the context width.
    Fill(bool),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Literal {
    pub width: Option<u32>,
    pub value: u64,
    pub form: LitForm,
}

impl Literal {
    pub fn int(value: u64) -> Self {
        Literal { width: None, value, form: LitForm::Plain }
    }

    pub fn sized(width: u32, value: u64) -> Self {
        Literal { width: Some(width), value: value & mask(width), form: LitForm::Based(LitBase::Dec) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnaryOp {
    Not,
    BitNot,
    Neg,
    Plus,
    RedAnd,
    RedOr,
    RedXor,
    RedNand,
    RedNor,
    RedXnor,
}

impl UnaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnaryOp::Not => "!",
            UnaryOp::BitNot => "~",
            UnaryOp::Neg => "-",
            UnaryOp::Plus => "+",
            UnaryOp::RedAnd => "&",
            UnaryOp::RedOr => "|",
            UnaryOp::RedXor => "^",
            UnaryOp::RedNand => "~&",
            UnaryOp::RedNor => "~|",
            UnaryOp::RedXnor => "~^",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinaryOp {
    Mul,
    Div,
    Mod,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    CaseEq,
    CaseNe,
    BitAnd,
    BitXor,
    BitXnor,
    BitOr,
    LogAnd,
    LogOr,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        use BinaryOp::*;
        match self {
            Mul => "*",
            Div => "/",
            Mod => "%",
            Add => "+",
            Sub => "-",
            Shl => "<<",
            Shr => ">>",
            Lt => "<",
            Le => "<=",
            Gt => ">",
            Ge => ">=",
            Eq => "==",
            Ne => "!=",
            CaseEq => "===",
            CaseNe => "!==",
            BitAnd => "&",
            BitXor => "^",
            BitXnor => "~^",
            BitOr => "|",
            LogAnd => "&&",
            LogOr => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        use BinaryOp::*;
        match self {
            Mul | Div | Mod => 10,
            Add | Sub => 9,
            Shl | Shr => 8,
            Lt | Le | Gt | Ge => 7,
            Eq | Ne | CaseEq | CaseNe => 6,
            BitAnd => 5,
            BitXor | BitXnor => 4,
            BitOr => 3,
            LogAnd => 2,
            LogOr => 1,
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        use BinaryOp::*;
        Some(match s {
            "*" => Mul,
            "/" => Div,
            "%" => Mod,
            "+" => Add,
            "-" => Sub,
            "<<" | "<<<" => Shl,
            ">>" | ">>>" => Shr,
            "<" => Lt,
            "<=" => Le,
            ">" => Gt,
            ">=" => Ge,
            "==" => Eq,
            "!=" => Ne,
            "===" => CaseEq,
            "!==" => CaseNe,
            "&" => BitAnd,
            "^" => BitXor,
            "~^" | "^~" => BitXnor,
            "|" => BitOr,
            "&&" => LogAnd,
            "||" => LogOr,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    /// Signal or parameter reference; hierarchical names are dotted.
    Ident { name: String, span: Span },
    Literal(Literal),
    /// Bit-select of a vector or element-select of an unpacked array.
    Index { base: Box<Expr>, index: Box<Expr> },
    /// Constant part-select `base[msb:lsb]`.
    Slice { base: Box<Expr>, msb: Box<Expr>, lsb: Box<Expr> },
    Unary { op: UnaryOp, operand: Box<Expr> },
    Binary { op: BinaryOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Ternary { cond: Box<Expr>, then: Box<Expr>, els: Box<Expr> },
    Concat(Vec<Expr>),
    Replicate { count: Box<Expr>, items: Vec<Expr> },
    /// System function call such as `$past(x, 2)`.
    Call { name: String, args: Vec<Expr> },
}

impl Expr {
    pub fn ident(name: impl Into<String>) -> Self {
        Expr::Ident { name: name.into(), span: Span::default() }
    }

    pub fn lit(value: u64) -> Self {
        Expr::Literal(Literal::int(value))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }
    }

    pub fn unary(op: UnaryOp, operand: Expr) -> Self {
        Expr::Unary { op, operand: Box::new(operand) }
    }

    /// Innermost identifier of a select chain (`mem[1][3]` -> `mem`).
    pub fn base_name(&self) -> Option<&str> {
        match self {
            Expr::Ident { name, .. } => Some(name),
            Expr::Index { base, .. } | Expr::Slice { base, .. } => base.base_name(),
            _ => None,
        }
    }

    /// Collects every identifier this expression reads.
    pub fn collect_reads(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Ident { name, .. } => {
                out.insert(name.clone());
            }
            Expr::Literal(_) => {}
            Expr::Index { base, index } => {
                base.collect_reads(out);
                index.collect_reads(out);
            }
            Expr::Slice { base, msb, lsb } => {
                base.collect_reads(out);
                msb.collect_reads(out);
                lsb.collect_reads(out);
            }
            Expr::Unary { operand, .. } => operand.collect_reads(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_reads(out);
                rhs.collect_reads(out);
            }
            Expr::Ternary { cond, then, els } => {
                cond.collect_reads(out);
                then.collect_reads(out);
                els.collect_reads(out);
            }
            Expr::Concat(items) => items.iter().for_each(|e| e.collect_reads(out)),
            Expr::Replicate { count, items } => {
                count.collect_reads(out);
                items.iter().for_each(|e| e.collect_reads(out));
            }
            Expr::Call { args, .. } => args.iter().for_each(|e| e.collect_reads(out)),
        }
    }

    pub fn reads(&self) -> BTreeSet<String> {
        let mut s = BTreeSet::new();
        self.collect_reads(&mut s);
        s
    }

    /// For an assignment target: the written names, plus names read by
    /// index expressions.
    pub fn collect_lvalue(&self, written: &mut BTreeSet<String>, read: &mut BTreeSet<String>) {
        match self {
            Expr::Ident { name, .. } => {
                written.insert(name.clone());
            }
            Expr::Index { base, index } => {
                base.collect_lvalue(written, read);
                index.collect_reads(read);
            }
            Expr::Slice { base, msb, lsb } => {
                base.collect_lvalue(written, read);
                msb.collect_reads(read);
                lsb.collect_reads(read);
            }
            Expr::Concat(items) => items.iter().for_each(|e| e.collect_lvalue(written, read)),
            other => other.collect_reads(read),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Ternary { .. } => 0,
            Expr::Binary { op, .. } => op.precedence(),
            Expr::Unary { .. } => 11,
            _ => 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseArm {
    pub labels: Vec<Expr>,
    pub body: Stmt,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stmt {
    Block { label: Option<String>, stmts: Vec<Stmt> },
    If { cond: Expr, then: Box<Stmt>, els: Option<Box<Stmt>> },
    Case { subject: Expr, arms: Vec<CaseArm>, default: Option<Box<Stmt>> },
    Assign { lhs: Expr, rhs: Expr, blocking: bool, span: Span },
    Null,
}

impl Stmt {
    pub fn collect_names(&self, assigned: &mut BTreeSet<String>, read: &mut BTreeSet<String>) {
        match self {
            Stmt::Block { stmts, .. } => stmts.iter().for_each(|s| s.collect_names(assigned, read)),
            Stmt::If { cond, then, els } => {
                cond.collect_reads(read);
                then.collect_names(assigned, read);
                if let Some(e) = els {
                    e.collect_names(assigned, read);
                }
            }
            Stmt::Case { subject, arms, default } => {
                subject.collect_reads(read);
                for arm in arms {
                    arm.labels.iter().for_each(|l| l.collect_reads(read));
                    arm.body.collect_names(assigned, read);
                }
                if let Some(d) = default {
                    d.collect_names(assigned, read);
                }
            }
            Stmt::Assign { lhs, rhs, .. } => {
                lhs.collect_lvalue(assigned, read);
                rhs.collect_reads(read);
            }
            Stmt::Null => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Pretty printing. The output re-parses to an identical tree.

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.form {
            LitForm::Plain => write!(f, "{}", self.value),
            LitForm::Fill(b) => write!(f, "'{}", u8::from(b)),
            LitForm::Based(base) => {
                if let Some(w) = self.width {
                    write!(f, "{w}")?;
                }
                match base {
                    LitBase::Bin => write!(f, "'b{:b}", self.value),
                    LitBase::Oct => write!(f, "'o{:o}", self.value),
                    LitBase::Dec => write!(f, "'d{}", self.value),
                    LitBase::Hex => write!(f, "'h{:x}", self.value),
                }
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, min_prec: u8) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

fn write_list(f: &mut fmt::Formatter<'_>, items: &[Expr]) -> fmt::Result {
    for (i, e) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{e}")?;
    }
    Ok(())
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Ident { name, .. } => f.write_str(name),
            Expr::Literal(l) => write!(f, "{l}"),
            Expr::Index { base, index } => {
                write_operand(f, base, 12)?;
                write!(f, "[{index}]")
            }
            Expr::Slice { base, msb, lsb } => {
                write_operand(f, base, 12)?;
                write!(f, "[{msb}:{lsb}]")
            }
            Expr::Unary { op, operand } => {
                f.write_str(op.symbol())?;
                // Parenthesize anything that is not a primary so `- -a`
                // and `~&a` stay unambiguous.
                if operand.precedence() >= 12 && !matches!(**operand, Expr::Literal(_)) {
                    write!(f, "{operand}")
                } else {
                    write!(f, "({operand})")
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                write_operand(f, lhs, p)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, rhs, p + 1)
            }
            Expr::Ternary { cond, then, els } => {
                write_operand(f, cond, 1)?;
                f.write_str(" ? ")?;
                write_operand(f, then, 1)?;
                f.write_str(" : ")?;
                write!(f, "{els}")
            }
            Expr::Concat(items) => {
                f.write_str("{")?;
                write_list(f, items)?;
                f.write_str("}")
            }
            Expr::Replicate { count, items } => {
                write!(f, "{{{count}{{")?;
                write_list(f, items)?;
                f.write_str("}}")
            }
            Expr::Call { name, args } => {
                write!(f, "{name}(")?;
                write_list(f, args)?;
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}:{}]", self.msb, self.lsb)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Input => "input",
            Direction::Output => "output",
            Direction::Inout => "inout",
        })
    }
}

impl fmt::Display for NetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetKind::Wire => "wire",
            NetKind::Reg => "reg",
            NetKind::Logic => "logic",
        })
    }
}

impl fmt::Display for ParamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParamKind::Parameter => "parameter",
            ParamKind::Localparam => "localparam",
        })
    }
}

impl fmt::Display for Port {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.direction, self.net)?;
        if let Some(r) = &self.range {
            write!(f, " {r}")?;
        }
        write!(f, " {}", self.name)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} = {}", self.kind, self.name, self.value)
    }
}

impl fmt::Display for Sensitivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sensitivity::Star => f.write_str("@(*)"),
            Sensitivity::Edges(evs) => {
                f.write_str("@(")?;
                for (i, ev) in evs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" or ")?;
                    }
                    write!(f, "{} {}", ev.edge.keyword(), ev.signal)?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Writes a statement at the given indent level (two spaces per level).
pub fn write_stmt(out: &mut String, s: &Stmt, indent: usize) {
    let pad = "  ".repeat(indent);
    match s {
        Stmt::Block { label, stmts } => {
            out.push_str(&pad);
            out.push_str("begin");
            if let Some(l) = label {
                out.push_str(" : ");
                out.push_str(l);
            }
            out.push('\n');
            for st in stmts {
                write_stmt(out, st, indent + 1);
            }
            out.push_str(&pad);
            out.push_str("end\n");
        }
        Stmt::If { cond, then, els } => {
            out.push_str(&format!("{pad}if ({cond})\n"));
            write_stmt(out, then, indent + 1);
            if let Some(e) = els {
                out.push_str(&format!("{pad}else\n"));
                write_stmt(out, e, indent + 1);
            }
        }
        Stmt::Case { subject, arms, default } => {
            out.push_str(&format!("{pad}case ({subject})\n"));
            for arm in arms {
                let labels: Vec<String> = arm.labels.iter().map(|l| l.to_string()).collect();
                out.push_str(&format!("{pad}  {}:\n", labels.join(", ")));
                write_stmt(out, &arm.body, indent + 2);
            }
            if let Some(d) = default {
                out.push_str(&format!("{pad}  default:\n"));
                write_stmt(out, d, indent + 2);
            }
            out.push_str(&format!("{pad}endcase\n"));
        }
        Stmt::Assign { lhs, rhs, blocking, .. } => {
            let op = if *blocking { "=" } else { "<=" };
            out.push_str(&format!("{pad}{lhs} {op} {rhs};\n"));
        }
        Stmt::Null => {
            out.push_str(&pad);
            out.push_str(";\n");
        }
    }
}

impl fmt::Display for AlwaysBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = match (self.kind, &self.sensitivity) {
            (AlwaysKind::AlwaysComb, _) => "always_comb".to_string(),
            (AlwaysKind::AlwaysFf, s) => format!("always_ff {s}"),
            (AlwaysKind::Always, s) => format!("always {s}"),
        };
        let mut body = String::new();
        write_stmt(&mut body, &self.body, 1);
        write!(f, "{head}\n{}", body.trim_end_matches('\n'))
    }
}

impl fmt::Display for InstanceDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.target)?;
        if !self.param_overrides.is_empty() {
            f.write_str(" #(")?;
            for (i, (n, v)) in self.param_overrides.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, ".{n}({v})")?;
            }
            f.write_str(")")?;
        }
        write!(f, " {} (", self.instance_name)?;
        for (i, c) in self.connections.iter().enumerate() {
            f.write_str(if i > 0 { ",\n  " } else { "\n  " })?;
            match &c.actual {
                Some(a) => write!(f, ".{}({a})", c.formal)?,
                None => write!(f, ".{}()", c.formal)?,
            }
        }
        if !self.connections.is_empty() {
            f.write_str("\n")?;
        }
        f.write_str(");")
    }
}

impl fmt::Display for AssignStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "assign {} = {};", self.lhs, self.rhs)
    }
}

impl fmt::Display for NetDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.net)?;
        if let Some(r) = &self.range {
            write!(f, " {r}")?;
        }
        for (i, d) in self.names.iter().enumerate() {
            f.write_str(if i > 0 { ", " } else { " " })?;
            f.write_str(&d.name)?;
            if let Some(u) = &d.unpacked {
                write!(f, " {u}")?;
            }
        }
        f.write_str(";")
    }
}

impl fmt::Display for ModuleItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModuleItem::Net(n) => write!(f, "{n}"),
            ModuleItem::Always(a) => write!(f, "{a}"),
            ModuleItem::Instance(i) => write!(f, "{i}"),
            ModuleItem::Assign(a) => write!(f, "{a}"),
        }
    }
}

impl ModuleDecl {
    /// `module name #(...) (...);` without the body.
    pub fn header(&self) -> String {
        let mut s = format!("module {}", self.name);
        if !self.params.is_empty() {
            s.push_str(" #(\n");
            let ps: Vec<String> = self.params.iter().map(|p| format!("  {p}")).collect();
            s.push_str(&ps.join(",\n"));
            s.push_str("\n)");
        }
        if self.ports.is_empty() {
            s.push_str(" ();");
        } else {
            s.push_str(" (\n");
            let ps: Vec<String> = self.ports.iter().map(|p| format!("  {p}")).collect();
            s.push_str(&ps.join(",\n"));
            s.push_str("\n);");
        }
        s
    }
}

fn indent_block(text: &str) -> String {
    text.lines().map(|l| if l.is_empty() { String::new() } else { format!("  {l}") }).collect::<Vec<_>>().join("\n")
}

impl fmt::Display for ModuleDecl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header())?;
        for item in &self.items {
            writeln!(f, "{}", indent_block(&item.to_string()))?;
        }
        write!(f, "endmodule")
    }
}

impl fmt::Display for SourceUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, m) in self.modules.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            writeln!(f, "{m}")?;
        }
        Ok(())
    }
}
