//! Tokenizer shared by the RTL and assertion parsers.

use std::sync::Arc;

use crate::diag::{Diagnostic, Span};
use crate::rtl::ast::{LitBase, LitForm, Literal};

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    Ident(String),
    /// `$past`, `$rose`, ...
    SysIdent(String),
    Number(Literal),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

impl Token {
    pub fn is_punct(&self, p: &str) -> bool {
        matches!(&self.kind, TokenKind::Punct(q) if *q == p)
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(s) if s == kw)
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            TokenKind::Ident(s) => format!("'{s}'"),
            TokenKind::SysIdent(s) => format!("'{s}'"),
            TokenKind::Number(l) => format!("number '{l}'"),
            TokenKind::Punct(p) => format!("'{p}'"),
            TokenKind::Eof => "end of input".to_string(),
        }
    }
}

// Longest first.
const PUNCTS: &[&str] = &[
    "<<<", ">>>", "===", "!==", "|->", "|=>", "##", "<=", ">=", "==", "!=", "&&", "||", "<<", ">>",
    "~&", "~|", "~^", "^~", "**", "(", ")", "[", "]", "{", "}", ",", ";", ":", ".", "#", "@", "=",
    "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">", "?",
];

pub const MAX_WIDTH: u32 = 64;

pub fn tokenize(file: &Arc<str>, src: &str) -> Result<Vec<Token>, Diagnostic> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            bump!();
            continue;
        }
        let span = Span::new(file, line, col);
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(Diagnostic::error(&span, "unterminated block comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }
        if c == '`' {
            return Err(Diagnostic::error(&span, "unsupported construct: compiler directive"));
        }
        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let start = i;
            bump!();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '$') {
                bump!();
            }
            let text: String = chars[start..i].iter().collect();
            if c == '$' {
                if text.len() == 1 {
                    toks.push(Token { kind: TokenKind::Punct("$"), span });
                } else {
                    toks.push(Token { kind: TokenKind::SysIdent(text), span });
                }
            } else {
                toks.push(Token { kind: TokenKind::Ident(text), span });
            }
            continue;
        }
        if c.is_ascii_digit() || c == '\'' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '_') {
                bump!();
            }
            let size_text: String = chars[start..i].iter().filter(|c| **c != '_').collect();
            if i < chars.len() && chars[i] == '\'' {
                bump!();
                let width = if size_text.is_empty() {
                    None
                } else {
                    let w: u32 = size_text
                        .parse()
                        .map_err(|_| Diagnostic::error(&span, format!("invalid literal width '{size_text}'")))?;
                    if w == 0 || w > MAX_WIDTH {
                        return Err(Diagnostic::error(
                            &span,
                            format!("unsupported construct: literal width {w} (supported 1..={MAX_WIDTH})"),
                        ));
                    }
                    Some(w)
                };
                let Some(&bc) = chars.get(i) else {
                    return Err(Diagnostic::error(&span, "malformed based literal"));
                };
                if width.is_none() && (bc == '0' || bc == '1') {
                    bump!();
                    let lit = Literal { width: None, value: 0, form: LitForm::Fill(bc == '1') };
                    toks.push(Token { kind: TokenKind::Number(lit), span });
                    continue;
                }
                let mut bc = bc;
                if bc == 's' || bc == 'S' {
                    return Err(Diagnostic::error(&span, "unsupported construct: signed literal"));
                }
                let base = match bc.to_ascii_lowercase() {
                    'b' => LitBase::Bin,
                    'o' => LitBase::Oct,
                    'd' => LitBase::Dec,
                    'h' => LitBase::Hex,
                    _ => {
                        if bc == '(' {
                            return Err(Diagnostic::error(&span, "unsupported construct: cast"));
                        }
                        return Err(Diagnostic::error(&span, format!("invalid literal base '{bc}'")));
                    }
                };
                bump!();
                while i < chars.len() && chars[i] == ' ' {
                    bump!();
                }
                let dstart = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '?') {
                    bump!();
                }
                let digits: String = chars[dstart..i].iter().filter(|c| **c != '_').collect();
                if digits.is_empty() {
                    return Err(Diagnostic::error(&span, "based literal has no digits"));
                }
                if digits.chars().any(|d| matches!(d.to_ascii_lowercase(), 'x' | 'z' | '?')) {
                    return Err(Diagnostic::error(&span, "unsupported construct: x/z literal (2-state values only)"));
                }
                bc = bc.to_ascii_lowercase();
                let radix = base.radix();
                let value = u128::from_str_radix(&digits, radix).map_err(|_| {
                    Diagnostic::error(&span, format!("invalid digits '{digits}' for base '{bc}'"))
                })?;
                if value > u64::MAX as u128 {
                    return Err(Diagnostic::error(&span, "unsupported construct: literal wider than 64 bits"));
                }
                let mut value = value as u64;
                if let Some(w) = width {
                    value &= crate::rtl::ast::mask(w);
                }
                let lit = Literal { width, value, form: LitForm::Based(base) };
                toks.push(Token { kind: TokenKind::Number(lit), span });
                continue;
            }
            if size_text.is_empty() {
                return Err(Diagnostic::error(&span, "malformed literal"));
            }
            if i < chars.len() && (chars[i].is_ascii_alphabetic() || chars[i] == '.') {
                return Err(Diagnostic::error(&span, format!("malformed number near '{}'", chars[i])));
            }
            let value: u64 = size_text
                .parse()
                .map_err(|_| Diagnostic::error(&span, "unsupported construct: decimal literal wider than 64 bits"))?;
            toks.push(Token { kind: TokenKind::Number(Literal { width: None, value, form: LitForm::Plain }), span });
            continue;
        }
        if c == '"' {
            return Err(Diagnostic::error(&span, "unsupported construct: string literal"));
        }
        let rest: String = chars[i..(i + 3).min(chars.len())].iter().collect();
        let Some(p) = PUNCTS.iter().find(|p| rest.starts_with(**p)) else {
            return Err(Diagnostic::error(&span, format!("unexpected character '{c}'")));
        };
        for _ in 0..p.chars().count() {
            bump!();
        }
        toks.push(Token { kind: TokenKind::Punct(p), span });
    }
    toks.push(Token { kind: TokenKind::Eof, span: Span::new(file, line, col) });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(&Arc::from("t.sv"), src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn based_literals() {
        let k = kinds("8'hFF 'd0 '1 4'b1_0_1_0 12");
        assert_eq!(k[0], TokenKind::Number(Literal { width: Some(8), value: 255, form: LitForm::Based(LitBase::Hex) }));
        assert_eq!(k[1], TokenKind::Number(Literal { width: None, value: 0, form: LitForm::Based(LitBase::Dec) }));
        assert_eq!(k[2], TokenKind::Number(Literal { width: None, value: 0, form: LitForm::Fill(true) }));
        assert_eq!(k[3], TokenKind::Number(Literal { width: Some(4), value: 10, form: LitForm::Based(LitBase::Bin) }));
        assert_eq!(k[4], TokenKind::Number(Literal { width: None, value: 12, form: LitForm::Plain }));
    }

    #[test]
    fn longest_punct_wins() {
        let k = kinds("a |-> ##1 b <= c");
        assert_eq!(k[1], TokenKind::Punct("|->"));
        assert_eq!(k[2], TokenKind::Punct("##"));
        assert_eq!(k[5], TokenKind::Punct("<="));
    }

    #[test]
    fn comments_and_positions() {
        let toks = tokenize(&Arc::from("t.sv"), "// hi\n/* x\n */ foo").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Ident("foo".into()));
        assert_eq!((toks[0].span.line, toks[0].span.col), (3, 5));
    }

    #[test]
    fn rejects_xz() {
        let e = tokenize(&Arc::from("t.sv"), "4'b10x1").unwrap_err();
        assert!(e.message.contains("x/z"));
    }
}
