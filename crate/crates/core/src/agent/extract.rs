//! Pulls `label: assert property (...);` statements out of fenced code.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::solver::AssertionSrc;

fn fence() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"(?s)```[^\n]*\n(.*?)```").unwrap())
}

fn head() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"(?:\b([A-Za-z_][A-Za-z0-9_$]*)\s*:\s*)?\bassert\s+property\s*\(").unwrap())
}

/// Index just past the parenthesis closing the one before `open`.
fn balanced(text: &str, open: usize) -> Option<usize> {
    let mut depth = 1;
    for (i, c) in text[open..].char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(open + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Extracts every assertion from fenced code regions. Property text is kept
/// verbatim (trimmed); unlabeled assertions get `assert_<n>` and repeated
/// labels get a `_<n>` suffix. `None` when the text has no fenced region
/// containing an assertion.
pub fn extract_assertions(text: &str) -> Option<Vec<AssertionSrc>> {
    let mut out = Vec::new();
    let mut used = BTreeSet::new();
    for f in fence().captures_iter(text) {
        let code = f.get(1).expect("group").as_str();
        let mut pos = 0;
        while let Some(c) = head().captures_at(code, pos) {
            let whole = c.get(0).expect("match");
            let Some(close) = balanced(code, whole.end()) else { break };
            let property = code[whole.end()..close].trim().to_string();
            pos = close + 1;
            let base = c.get(1).map(|m| m.as_str().to_string()).unwrap_or_else(|| format!("assert_{}", out.len() + 1));
            let mut label = base.clone();
            let mut n = 2;
            while !used.insert(label.clone()) {
                label = format!("{base}_{n}");
                n += 1;
            }
            out.push(AssertionSrc { label, property });
        }
    }
    (!out.is_empty()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_block() {
        let t = "Here:\n```systemverilog\np1: assert property (@(posedge clk) a |-> ##1 (b && (c || d)));\n```\n";
        let a = extract_assertions(t).unwrap();
        assert_eq!(a, vec![AssertionSrc::new("p1", "@(posedge clk) a |-> ##1 (b && (c || d))")]);
    }

    #[test]
    fn verbatim_and_labels() {
        let t = "```\nassert property (@(posedge clk) ready[1:3] == 'd0);\nx: assert property (a);\nx: assert property (b);\n```";
        let a = extract_assertions(t).unwrap();
        assert_eq!(a[0].property, "@(posedge clk) ready[1:3] == 'd0");
        let labels: Vec<&str> = a.iter().map(|x| x.label.as_str()).collect();
        assert_eq!(labels, ["assert_1", "x", "x_2"]);
    }

    #[test]
    fn needs_a_fence() {
        assert_eq!(extract_assertions("p: assert property (a);"), None);
        assert_eq!(extract_assertions("```\nnothing here\n```"), None);
    }
}
