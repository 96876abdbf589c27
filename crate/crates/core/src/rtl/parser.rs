//! Recursive-descent parser for the supported SystemVerilog subset.

use std::sync::Arc;

use crate::diag::{Diagnostic, Span};
use crate::rtl::ast::*;
use crate::rtl::lexer::{tokenize, Token, TokenKind};

/// Keywords that are recognized only to be rejected with a named diagnostic.
const UNSUPPORTED_ITEMS: &[&str] = &[
    "initial", "generate", "genvar", "function", "task", "interface", "class", "package", "integer",
    "always_latch", "final", "specify", "typedef", "struct", "enum", "for", "program", "import", "bind",
    "property", "sequence", "assert", "assume", "cover", "defparam",
];

const KEYWORDS: &[&str] = &[
    "module", "endmodule", "input", "output", "inout", "wire", "reg", "logic", "parameter", "localparam",
    "assign", "always", "always_ff", "always_comb", "posedge", "negedge", "or", "begin", "end", "if", "else",
    "case", "endcase", "default", "signed", "unsigned",
];

pub type PResult<T> = Result<T, Diagnostic>;

pub struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// Accept dotted hierarchical identifiers and system calls (assertion context).
    pub assertion_mode: bool,
    positional_counter: usize,
}

impl Parser {
    pub fn new(file: &Arc<str>, src: &str) -> PResult<Self> {
        Ok(Parser { toks: tokenize(file, src)?, pos: 0, assertion_mode: false, positional_counter: 0 })
    }

    pub fn from_tokens(toks: Vec<Token>) -> Self {
        Parser { toks, pos: 0, assertion_mode: false, positional_counter: 0 }
    }

    pub fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    pub fn peek_at(&self, n: usize) -> &Token {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    pub fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    /// Tokens not yet consumed, including the end marker.
    pub fn remaining(&self) -> usize {
        self.toks.len() - self.pos
    }

    pub fn at_eof(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Eof)
    }

    pub fn span(&self) -> Span {
        self.peek().span.clone()
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.peek().is_punct(p) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    pub fn unexpected(&self, wanted: &str) -> Diagnostic {
        let t = self.peek();
        Diagnostic::error(&t.span, format!("syntax error: expected {wanted}, found {}", t.describe()))
    }

    pub fn expect_punct(&mut self, p: &str) -> PResult<Span> {
        if self.peek().is_punct(p) {
            Ok(self.next().span)
        } else {
            Err(self.unexpected(&format!("'{p}'")))
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> PResult<Span> {
        if self.peek().is_keyword(kw) {
            Ok(self.next().span)
        } else {
            Err(self.unexpected(&format!("'{kw}'")))
        }
    }

    pub fn expect_ident(&mut self) -> PResult<(String, Span)> {
        match &self.peek().kind {
            TokenKind::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                let t = self.next();
                Ok((s, t.span))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    // ------------------------------------------------------------------
    // Modules

    pub fn parse_modules(&mut self) -> PResult<Vec<ModuleDecl>> {
        let mut out = Vec::new();
        while !self.at_eof() {
            if let TokenKind::Ident(kw) = &self.peek().kind {
                if kw != "module" && UNSUPPORTED_ITEMS.contains(&kw.as_str()) {
                    return Err(Diagnostic::error(&self.span(), format!("unsupported construct: {kw}")));
                }
            }
            out.push(self.parse_module()?);
        }
        Ok(out)
    }

    fn parse_module(&mut self) -> PResult<ModuleDecl> {
        let span = self.expect_keyword("module")?;
        let (name, _) = self.expect_ident()?;
        let mut params = Vec::new();
        if self.eat_punct("#") {
            self.expect_punct("(")?;
            if !self.peek().is_punct(")") {
                let mut kind = ParamKind::Parameter;
                loop {
                    if self.eat_keyword("parameter") {
                        kind = ParamKind::Parameter;
                    } else if self.eat_keyword("localparam") {
                        kind = ParamKind::Localparam;
                    }
                    params.push(self.parse_param_assignment(kind)?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
            }
            self.expect_punct(")")?;
        }
        let mut ports = Vec::new();
        if self.eat_punct("(") {
            if !self.peek().is_punct(")") {
                ports = self.parse_port_list()?;
            }
            self.expect_punct(")")?;
        }
        self.expect_punct(";")?;
        let mut items = Vec::new();
        while !self.peek().is_keyword("endmodule") {
            if self.at_eof() {
                return Err(self.unexpected("'endmodule'"));
            }
            self.parse_item(&mut items, &mut params)?;
        }
        self.next();
        Ok(ModuleDecl { name, params, ports, items, span })
    }

    fn parse_param_assignment(&mut self, kind: ParamKind) -> PResult<Param> {
        // Optional data type keywords carry no information at 2-state.
        while self.peek().is_keyword("int") || self.peek().is_keyword("integer") || self.peek().is_keyword("unsigned") {
            self.next();
        }
        if self.peek().is_punct("[") {
            return Err(Diagnostic::error(&self.span(), "unsupported construct: ranged parameter"));
        }
        let (name, span) = self.expect_ident()?;
        self.expect_punct("=")?;
        let value = self.parse_expr()?;
        Ok(Param { name, kind, value, span })
    }

    fn parse_port_list(&mut self) -> PResult<Vec<Port>> {
        let mut ports = Vec::new();
        let mut current: Option<(Direction, NetKind, Option<Range>)> = None;
        loop {
            let dir = if self.eat_keyword("input") {
                Some(Direction::Input)
            } else if self.eat_keyword("output") {
                Some(Direction::Output)
            } else if self.eat_keyword("inout") {
                Some(Direction::Inout)
            } else {
                None
            };
            if let Some(d) = dir {
                let net = self.parse_net_kind().unwrap_or(NetKind::Wire);
                self.reject_signed()?;
                let range = self.parse_opt_range()?;
                current = Some((d, net, range));
            } else if current.is_none() {
                if !matches!(self.peek().kind, TokenKind::Ident(_)) {
                    return Err(self.unexpected("port declaration"));
                }
                return Err(Diagnostic::error(&self.span(), "unsupported construct: non-ANSI port list"));
            }
            let (name, span) = self.expect_ident()?;
            if self.peek().is_punct("[") {
                return Err(Diagnostic::error(&self.span(), "unsupported construct: unpacked array port"));
            }
            let (direction, net, range) = current.clone().expect("direction set");
            ports.push(Port { name, direction, net, range, span });
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok(ports)
    }

    fn reject_signed(&mut self) -> PResult<()> {
        if self.peek().is_keyword("signed") {
            return Err(Diagnostic::error(&self.span(), "unsupported construct: signed"));
        }
        self.eat_keyword("unsigned");
        Ok(())
    }

    fn parse_net_kind(&mut self) -> Option<NetKind> {
        if self.eat_keyword("wire") {
            Some(NetKind::Wire)
        } else if self.eat_keyword("reg") {
            Some(NetKind::Reg)
        } else if self.eat_keyword("logic") {
            Some(NetKind::Logic)
        } else {
            None
        }
    }

    fn parse_opt_range(&mut self) -> PResult<Option<Range>> {
        if !self.eat_punct("[") {
            return Ok(None);
        }
        let msb = self.parse_expr()?;
        self.expect_punct(":")?;
        let lsb = self.parse_expr()?;
        self.expect_punct("]")?;
        Ok(Some(Range { msb, lsb }))
    }

    fn parse_item(&mut self, items: &mut Vec<ModuleItem>, params: &mut Vec<Param>) -> PResult<()> {
        let span = self.span();
        let kw = match &self.peek().kind {
            TokenKind::Ident(s) => s.clone(),
            _ => return Err(self.unexpected("module item")),
        };
        match kw.as_str() {
            "wire" | "reg" | "logic" => {
                let net = self.parse_net_kind().expect("net keyword");
                self.reject_signed()?;
                let range = self.parse_opt_range()?;
                let mut names = Vec::new();
                loop {
                    let (name, nspan) = self.expect_ident()?;
                    let unpacked = self.parse_opt_range()?;
                    if self.peek().is_punct("[") {
                        return Err(Diagnostic::error(&self.span(), "unsupported construct: multi-dimensional unpacked array"));
                    }
                    if self.peek().is_punct("=") {
                        return Err(Diagnostic::error(&self.span(), "unsupported construct: net declaration assignment"));
                    }
                    names.push(DeclName { name, unpacked, span: nspan });
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
                items.push(ModuleItem::Net(NetDecl { net, range, names, span }));
            }
            "parameter" | "localparam" => {
                self.next();
                let kind = if kw == "parameter" { ParamKind::Parameter } else { ParamKind::Localparam };
                loop {
                    params.push(self.parse_param_assignment(kind)?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            }
            "assign" => {
                self.next();
                loop {
                    let aspan = self.span();
                    let lhs = self.parse_lvalue()?;
                    self.expect_punct("=")?;
                    let rhs = self.parse_expr()?;
                    items.push(ModuleItem::Assign(AssignStmt { lhs, rhs, span: aspan }));
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct(";")?;
            }
            "always" | "always_ff" | "always_comb" => {
                self.next();
                let kind = match kw.as_str() {
                    "always" => AlwaysKind::Always,
                    "always_ff" => AlwaysKind::AlwaysFf,
                    _ => AlwaysKind::AlwaysComb,
                };
                let sensitivity = if kind == AlwaysKind::AlwaysComb {
                    Sensitivity::Star
                } else {
                    self.parse_sensitivity()?
                };
                if kind == AlwaysKind::AlwaysFf && sensitivity == Sensitivity::Star {
                    return Err(Diagnostic::error(&span, "always_ff requires an edge event list"));
                }
                let body = self.parse_stmt()?;
                items.push(ModuleItem::Always(AlwaysBlock::new(kind, sensitivity, body, span)));
            }
            k if UNSUPPORTED_ITEMS.contains(&k) => {
                return Err(Diagnostic::error(&span, format!("unsupported construct: {k}")));
            }
            k if KEYWORDS.contains(&k) => return Err(self.unexpected("module item")),
            _ => items.push(ModuleItem::Instance(self.parse_instance()?)),
        }
        Ok(())
    }

    fn parse_sensitivity(&mut self) -> PResult<Sensitivity> {
        self.expect_punct("@")?;
        if self.eat_punct("*") {
            return Ok(Sensitivity::Star);
        }
        self.expect_punct("(")?;
        if self.eat_punct("*") {
            self.expect_punct(")")?;
            return Ok(Sensitivity::Star);
        }
        let mut evs = Vec::new();
        loop {
            let edge = if self.eat_keyword("posedge") {
                Edge::Pos
            } else if self.eat_keyword("negedge") {
                Edge::Neg
            } else {
                return Err(Diagnostic::error(&self.span(), "unsupported construct: level-sensitive event list"));
            };
            let (signal, _) = self.expect_ident()?;
            evs.push(EdgeEvent { edge, signal });
            if !(self.eat_keyword("or") || self.eat_punct(",")) {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(Sensitivity::Edges(evs))
    }

    fn parse_instance(&mut self) -> PResult<InstanceDecl> {
        let (target, span) = self.expect_ident()?;
        let mut param_overrides = Vec::new();
        if self.eat_punct("#") {
            self.expect_punct("(")?;
            let mut idx = 0;
            while !self.peek().is_punct(")") {
                if self.eat_punct(".") {
                    let (n, _) = self.expect_ident()?;
                    self.expect_punct("(")?;
                    let v = self.parse_expr()?;
                    self.expect_punct(")")?;
                    param_overrides.push((n, v));
                } else {
                    let v = self.parse_expr()?;
                    param_overrides.push((format!("#{idx}"), v));
                }
                idx += 1;
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(")")?;
        }
        let (instance_name, _) = self.expect_ident()?;
        if self.peek().is_punct("[") {
            return Err(Diagnostic::error(&self.span(), "unsupported construct: instance array"));
        }
        self.expect_punct("(")?;
        let mut connections = Vec::new();
        while !self.peek().is_punct(")") {
            if self.eat_punct(".") {
                if self.peek().is_punct("*") {
                    return Err(Diagnostic::error(&self.span(), "unsupported construct: wildcard port connection"));
                }
                let (formal, _) = self.expect_ident()?;
                let actual = if self.eat_punct("(") {
                    let a = if self.peek().is_punct(")") { None } else { Some(self.parse_expr()?) };
                    self.expect_punct(")")?;
                    a
                } else {
                    return Err(Diagnostic::error(&self.span(), "unsupported construct: implicit named port connection"));
                };
                connections.push(Connection { formal, actual });
            } else {
                let actual = self.parse_expr()?;
                connections.push(Connection { formal: format!("#{}", self.positional_counter), actual: Some(actual) });
                self.positional_counter += 1;
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        self.positional_counter = 0;
        self.expect_punct(")")?;
        if self.peek().is_punct(",") {
            return Err(Diagnostic::error(&self.span(), "unsupported construct: multiple instances in one declaration"));
        }
        self.expect_punct(";")?;
        Ok(InstanceDecl { target, instance_name, param_overrides, connections, span })
    }

    // ------------------------------------------------------------------
    // Statements

    pub fn parse_stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        if self.eat_punct(";") {
            return Ok(Stmt::Null);
        }
        if self.eat_keyword("begin") {
            let label = if self.eat_punct(":") { Some(self.expect_ident()?.0) } else { None };
            let mut stmts = Vec::new();
            while !self.peek().is_keyword("end") {
                if self.at_eof() {
                    return Err(self.unexpected("'end'"));
                }
                stmts.push(self.parse_stmt()?);
            }
            self.next();
            if self.eat_punct(":") {
                self.expect_ident()?;
            }
            return Ok(Stmt::Block { label, stmts });
        }
        if self.eat_keyword("if") {
            self.expect_punct("(")?;
            let cond = self.parse_expr()?;
            self.expect_punct(")")?;
            let then = Box::new(self.parse_stmt()?);
            let els = if self.eat_keyword("else") { Some(Box::new(self.parse_stmt()?)) } else { None };
            return Ok(Stmt::If { cond, then, els });
        }
        if self.eat_keyword("case") {
            self.expect_punct("(")?;
            let subject = self.parse_expr()?;
            self.expect_punct(")")?;
            let mut arms = Vec::new();
            let mut default = None;
            while !self.peek().is_keyword("endcase") {
                if self.at_eof() {
                    return Err(self.unexpected("'endcase'"));
                }
                if self.eat_keyword("default") {
                    self.eat_punct(":");
                    if default.is_some() {
                        return Err(Diagnostic::error(&span, "case statement has more than one default"));
                    }
                    default = Some(Box::new(self.parse_stmt()?));
                    continue;
                }
                let mut labels = vec![self.parse_expr()?];
                while self.eat_punct(",") {
                    labels.push(self.parse_expr()?);
                }
                self.expect_punct(":")?;
                let body = self.parse_stmt()?;
                arms.push(CaseArm { labels, body });
            }
            self.next();
            return Ok(Stmt::Case { subject, arms, default });
        }
        if let TokenKind::Ident(k) = &self.peek().kind {
            if matches!(k.as_str(), "casez" | "casex" | "unique" | "priority" | "for" | "while" | "repeat" | "forever") {
                return Err(Diagnostic::error(&span, format!("unsupported construct: {k}")));
            }
        }
        let lhs = self.parse_lvalue()?;
        let blocking = if self.eat_punct("=") {
            true
        } else if self.eat_punct("<=") {
            false
        } else {
            return Err(self.unexpected("'=' or '<='"));
        };
        let rhs = self.parse_expr()?;
        self.expect_punct(";")?;
        Ok(Stmt::Assign { lhs, rhs, blocking, span })
    }

    fn parse_lvalue(&mut self) -> PResult<Expr> {
        if self.eat_punct("{") {
            let mut items = vec![self.parse_lvalue()?];
            while self.eat_punct(",") {
                items.push(self.parse_lvalue()?);
            }
            self.expect_punct("}")?;
            return Ok(Expr::Concat(items));
        }
        let (name, span) = self.expect_ident()?;
        self.parse_selects(Expr::Ident { name, span })
    }

    fn parse_selects(&mut self, mut e: Expr) -> PResult<Expr> {
        while self.peek().is_punct("[") {
            let span = self.next().span;
            let first = self.parse_expr()?;
            if self.peek().is_punct("+") && self.peek_at(1).is_punct(":") || self.peek().is_punct("-") && self.peek_at(1).is_punct(":") {
                return Err(Diagnostic::error(&span, "unsupported construct: indexed part-select"));
            }
            if self.eat_punct(":") {
                let lsb = self.parse_expr()?;
                self.expect_punct("]")?;
                e = Expr::Slice { base: Box::new(e), msb: Box::new(first), lsb: Box::new(lsb) };
            } else {
                self.expect_punct("]")?;
                e = Expr::Index { base: Box::new(e), index: Box::new(first) };
            }
        }
        Ok(e)
    }

    // ------------------------------------------------------------------
    // Expressions

    pub fn parse_expr(&mut self) -> PResult<Expr> {
        let cond = self.parse_binary(1)?;
        if self.eat_punct("?") {
            let then = self.parse_expr()?;
            self.expect_punct(":")?;
            let els = self.parse_expr()?;
            return Ok(Expr::Ternary { cond: Box::new(cond), then: Box::new(then), els: Box::new(els) });
        }
        Ok(cond)
    }

    fn peek_binary(&self) -> Option<BinaryOp> {
        match &self.peek().kind {
            TokenKind::Punct(p) => BinaryOp::from_symbol(p),
            _ => None,
        }
    }

    fn parse_binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.parse_unary()?;
        while let Some(op) = self.peek_binary() {
            let p = op.precedence();
            if p < min_prec {
                break;
            }
            self.next();
            let rhs = self.parse_binary(p + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn parse_unary(&mut self) -> PResult<Expr> {
        let op = match &self.peek().kind {
            TokenKind::Punct(p) => match *p {
                "!" => Some(UnaryOp::Not),
                "~" => Some(UnaryOp::BitNot),
                "-" => Some(UnaryOp::Neg),
                "+" => Some(UnaryOp::Plus),
                "&" => Some(UnaryOp::RedAnd),
                "|" => Some(UnaryOp::RedOr),
                "^" => Some(UnaryOp::RedXor),
                "~&" => Some(UnaryOp::RedNand),
                "~|" => Some(UnaryOp::RedNor),
                "~^" | "^~" => Some(UnaryOp::RedXnor),
                _ => None,
            },
            _ => None,
        };
        if let Some(op) = op {
            self.next();
            let operand = self.parse_unary()?;
            return Ok(Expr::unary(op, operand));
        }
        self.parse_primary()
    }

    fn parse_primary(&mut self) -> PResult<Expr> {
        let tok = self.peek().clone();
        match &tok.kind {
            TokenKind::Number(l) => {
                self.next();
                Ok(Expr::Literal(*l))
            }
            TokenKind::SysIdent(name) => {
                if !self.assertion_mode {
                    return Err(Diagnostic::error(&tok.span, format!("unsupported construct: system function {name}")));
                }
                self.next();
                self.expect_punct("(")?;
                let mut args = Vec::new();
                if !self.peek().is_punct(")") {
                    args.push(self.parse_expr()?);
                    while self.eat_punct(",") {
                        args.push(self.parse_expr()?);
                    }
                }
                self.expect_punct(")")?;
                Ok(Expr::Call { name: name.clone(), args })
            }
            TokenKind::Ident(_) => {
                let (mut name, span) = self.expect_ident()?;
                if self.assertion_mode {
                    while self.peek().is_punct(".") {
                        self.next();
                        let (part, _) = self.expect_ident()?;
                        name.push('.');
                        name.push_str(&part);
                    }
                } else if self.peek().is_punct(".") {
                    return Err(Diagnostic::error(&self.span(), "unsupported construct: hierarchical reference"));
                }
                if self.peek().is_punct("(") {
                    return Err(Diagnostic::error(&span, format!("unsupported construct: function call '{name}'")));
                }
                self.parse_selects(Expr::Ident { name, span })
            }
            TokenKind::Punct("(") => {
                self.next();
                let e = self.parse_expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            TokenKind::Punct("{") => {
                self.next();
                let first = self.parse_expr()?;
                if self.eat_punct("{") {
                    let mut items = vec![self.parse_expr()?];
                    while self.eat_punct(",") {
                        items.push(self.parse_expr()?);
                    }
                    self.expect_punct("}")?;
                    self.expect_punct("}")?;
                    return Ok(Expr::Replicate { count: Box::new(first), items });
                }
                let mut items = vec![first];
                while self.eat_punct(",") {
                    items.push(self.parse_expr()?);
                }
                self.expect_punct("}")?;
                Ok(Expr::Concat(items))
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}

/// Parses one file's modules without cross-module validation.
pub fn parse_file(file: &str, contents: &str) -> PResult<Vec<ModuleDecl>> {
    let file: Arc<str> = Arc::from(file);
    let mut p = Parser::new(&file, contents)?;
    p.parse_modules()
}
