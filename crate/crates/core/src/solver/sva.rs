//! Parser for the supported assertion subset.
//!
//! ```text
//! assertion := [label ':'] 'assert' 'property' '(' property ')' ';'
//! property  := ['@' '(' edge clock ')'] ['disable' 'iff' '(' expr ')'] seq [('|->' | '|=>') seq]
//! seq       := [delay] expr { delay expr }
//! delay     := '##' N | '##' '[' M ':' N ']'
//! ```

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diag::{Diagnostic, Span};
use crate::rtl::ast::{Edge, Expr};
use crate::rtl::lexer::{tokenize, Token, TokenKind};
use crate::rtl::parser::Parser;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImplKind {
    /// `|->`
    Overlapped,
    /// `|=>`
    NonOverlapped,
}

impl ImplKind {
    pub fn symbol(self) -> &'static str {
        match self {
            ImplKind::Overlapped => "|->",
            ImplKind::NonOverlapped => "|=>",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqStep {
    /// Cycles since the previous step (or the sequence start), inclusive range.
    pub delay: (u32, u32),
    pub expr: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub steps: Vec<SeqStep>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyAst {
    pub clock: Option<(Edge, String)>,
    pub disable_iff: Option<Expr>,
    /// `None` for a bare sequence, which is checked at every cycle.
    pub antecedent: Option<Sequence>,
    pub kind: ImplKind,
    pub consequent: Sequence,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionDecl {
    pub label: String,
    pub property: PropertyAst,
    pub span: Span,
}

fn write_delay(f: &mut fmt::Formatter<'_>, d: (u32, u32)) -> fmt::Result {
    if d.0 == d.1 {
        write!(f, "##{}", d.0)
    } else {
        write!(f, "##[{}:{}]", d.0, d.1)
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
                write_delay(f, s.delay)?;
                f.write_str(" ")?;
            } else if s.delay != (0, 0) {
                write_delay(f, s.delay)?;
                f.write_str(" ")?;
            }
            write!(f, "{}", s.expr)?;
        }
        Ok(())
    }
}

impl fmt::Display for PropertyAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((edge, clk)) = &self.clock {
            write!(f, "@({} {}) ", edge.keyword(), clk)?;
        }
        if let Some(d) = &self.disable_iff {
            write!(f, "disable iff ({d}) ")?;
        }
        if let Some(a) = &self.antecedent {
            write!(f, "{a} {} ", self.kind.symbol())?;
        }
        write!(f, "{}", self.consequent)
    }
}

impl PropertyAst {
    /// Every expression in the property, in source order.
    pub fn exprs(&self) -> Vec<&Expr> {
        let mut out: Vec<&Expr> = self.disable_iff.iter().collect();
        if let Some(a) = &self.antecedent {
            out.extend(a.steps.iter().map(|s| &s.expr));
        }
        out.extend(self.consequent.steps.iter().map(|s| &s.expr));
        out
    }
}

struct SvaParser {
    p: Parser,
}

impl SvaParser {
    fn number(&mut self) -> Result<u32, Diagnostic> {
        let t = self.p.next();
        match &t.kind {
            TokenKind::Number(l) if l.value <= u64::from(u32::MAX) => Ok(l.value as u32),
            TokenKind::Punct("$") => Err(Diagnostic::error(&t.span, "unsupported construct: unbounded delay range")),
            _ => Err(Diagnostic::error(&t.span, format!("syntax error: expected delay count, found {}", t.describe()))),
        }
    }

    fn delay(&mut self) -> Result<Option<(u32, u32)>, Diagnostic> {
        let span = self.p.span();
        if !self.p.eat_punct("##") {
            return Ok(None);
        }
        if self.p.eat_punct("[") {
            let lo = self.number()?;
            self.p.expect_punct(":")?;
            let hi = self.number()?;
            self.p.expect_punct("]")?;
            if lo > hi {
                return Err(Diagnostic::error(&span, format!("invalid delay range ##[{lo}:{hi}]: lower bound exceeds upper bound")));
            }
            Ok(Some((lo, hi)))
        } else {
            let n = self.number()?;
            Ok(Some((n, n)))
        }
    }

    fn sequence(&mut self) -> Result<Sequence, Diagnostic> {
        let mut steps = Vec::new();
        let first = self.delay()?.unwrap_or((0, 0));
        steps.push(SeqStep { delay: first, expr: self.p.parse_expr()? });
        while let Some(d) = self.delay()? {
            steps.push(SeqStep { delay: d, expr: self.p.parse_expr()? });
        }
        Ok(Sequence { steps })
    }

    fn property(&mut self) -> Result<PropertyAst, Diagnostic> {
        let mut clock = None;
        if self.p.eat_punct("@") {
            self.p.expect_punct("(")?;
            let edge = if self.p.eat_keyword("posedge") {
                Edge::Pos
            } else if self.p.eat_keyword("negedge") {
                Edge::Neg
            } else {
                return Err(self.p.unexpected("'posedge' or 'negedge'"));
            };
            let (clk, _) = self.p.expect_ident()?;
            self.p.expect_punct(")")?;
            clock = Some((edge, clk));
        }
        let mut disable_iff = None;
        if self.p.eat_keyword("disable") {
            self.p.expect_keyword("iff")?;
            self.p.expect_punct("(")?;
            disable_iff = Some(self.p.parse_expr()?);
            self.p.expect_punct(")")?;
        }
        let first = self.sequence()?;
        let kind = if self.p.eat_punct("|->") {
            Some(ImplKind::Overlapped)
        } else if self.p.eat_punct("|=>") {
            Some(ImplKind::NonOverlapped)
        } else {
            None
        };
        Ok(match kind {
            Some(kind) => PropertyAst { clock, disable_iff, antecedent: Some(first), kind, consequent: self.sequence()? },
            None => PropertyAst { clock, disable_iff, antecedent: None, kind: ImplKind::Overlapped, consequent: first },
        })
    }

    fn assertion(&mut self, index: usize) -> Result<AssertionDecl, Diagnostic> {
        let span = self.p.span();
        let mut label = None;
        if matches!(self.p.peek().kind, TokenKind::Ident(_)) && self.p.peek_at(1).is_punct(":") {
            label = Some(self.p.expect_ident()?.0);
            self.p.next();
        }
        self.p.expect_keyword("assert")?;
        self.p.expect_keyword("property")?;
        self.p.expect_punct("(")?;
        let property = self.property()?;
        self.p.expect_punct(")")?;
        self.p.expect_punct(";")?;
        Ok(AssertionDecl { label: label.unwrap_or_else(|| format!("assert_{}", index + 1)), property, span })
    }
}

/// Parses every assertion in `text`. A syntax error skips the rest of the
/// offending line, so each line can contribute at most one diagnostic.
pub fn parse_assertions(file: &str, text: &str) -> (Vec<AssertionDecl>, Vec<Diagnostic>) {
    let file: Arc<str> = Arc::from(file);
    let toks = match tokenize(&file, text) {
        Ok(t) => t,
        Err(d) => return (Vec::new(), vec![d]),
    };
    let mut decls = Vec::new();
    let mut diags = Vec::new();
    let mut rest: Vec<Token> = toks;
    loop {
        let mut sp = SvaParser { p: Parser::from_tokens(rest.clone()) };
        sp.p.assertion_mode = true;
        if sp.p.at_eof() {
            break;
        }
        let start = sp.p.span();
        let consumed = match sp.assertion(decls.len() + diags.len()) {
            Ok(a) => {
                decls.push(a);
                rest.len() - sp.remaining()
            }
            Err(d) => {
                let line = d.line.max(start.line);
                diags.push(d);
                rest.iter().position(|t| t.span.line > line || matches!(t.kind, TokenKind::Eof)).unwrap_or(rest.len() - 1)
            }
        };
        rest.drain(..consumed.max(1).min(rest.len() - 1));
    }
    (decls, diags)
}

impl SvaParser {
    fn remaining(&self) -> usize {
        self.p.remaining()
    }
}

/// Parses one property body (the text inside `assert property (...)`).
pub fn parse_property(text: &str) -> Result<PropertyAst, Diagnostic> {
    let file: Arc<str> = Arc::from("<property>");
    let mut sp = SvaParser { p: Parser::from_tokens(tokenize(&file, text)?) };
    sp.p.assertion_mode = true;
    let prop = sp.property()?;
    if !sp.p.at_eof() {
        return Err(sp.p.unexpected("end of property"));
    }
    Ok(prop)
}
