use serde::{Deserialize, Serialize};

use crate::rtl::ast::SourceUnit;
use crate::rtl::RtlError;

/// One node of the instantiation tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub module: String,
    /// Dotted instance path from the root; empty for the root.
    pub instance_path: String,
    pub external: bool,
    pub children: Vec<HierarchyNode>,
}

impl HierarchyNode {
    /// Depth-first `(module, path)` listing, root first.
    pub fn flatten(&self) -> Vec<(String, String)> {
        let mut out = vec![(self.module.clone(), self.instance_path.clone())];
        for c in &self.children {
            out.extend(c.flatten());
        }
        out
    }

    /// Indented one-line-per-instance rendering.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        self.write_summary(&mut s, 0);
        s
    }

    fn write_summary(&self, s: &mut String, depth: usize) {
        let name = if self.instance_path.is_empty() {
            self.module.clone()
        } else {
            let leaf = self.instance_path.rsplit('.').next().unwrap_or(&self.instance_path);
            format!("{leaf}: {}{}", self.module, if self.external { " (external)" } else { "" })
        };
        s.push_str(&"  ".repeat(depth));
        s.push_str(&name);
        s.push('\n');
        for c in &self.children {
            c.write_summary(s, depth + 1);
        }
    }
}

pub fn hierarchy_tree(unit: &SourceUnit, top: &str) -> Result<HierarchyNode, RtlError> {
    if unit.module(top).is_none() {
        return Err(RtlError::UnknownModule(top.to_string()));
    }
    let mut stack = Vec::new();
    build(unit, top, String::new(), &mut stack)
}

fn build(unit: &SourceUnit, module: &str, path: String, stack: &mut Vec<String>) -> Result<HierarchyNode, RtlError> {
    let Some(m) = unit.module(module) else {
        return Ok(HierarchyNode { module: module.to_string(), instance_path: path, external: true, children: vec![] });
    };
    if stack.iter().any(|s| s == module) {
        let mut cycle = stack.clone();
        cycle.push(module.to_string());
        return Err(RtlError::InstantiationCycle(cycle.join(" -> ")));
    }
    stack.push(module.to_string());
    let mut children = Vec::new();
    for inst in m.instances() {
        let child_path = if path.is_empty() { inst.instance_name.clone() } else { format!("{path}.{}", inst.instance_name) };
        children.push(build(unit, &inst.target, child_path, stack)?);
    }
    stack.pop();
    Ok(HierarchyNode { module: module.to_string(), instance_path: path, external: false, children })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::parse_source;

    #[test]
    fn nested_paths() {
        let u = parse_source(&[(
            "h.sv",
            "module leaf(input logic a); endmodule\nmodule mid(input logic a); leaf l0 (.a(a)); leaf l1 (.a(a)); endmodule\nmodule top(input logic a); mid m (.a(a)); endmodule",
        )])
        .unwrap();
        let h = hierarchy_tree(&u, "top").unwrap();
        let paths: Vec<String> = h.flatten().into_iter().map(|(_, p)| p).collect();
        assert_eq!(paths, ["", "m", "m.l0", "m.l1"]);
        assert_eq!(h.summary(), "top\n  m: mid\n    l0: leaf\n    l1: leaf\n");
        assert!(hierarchy_tree(&u, "nope").is_err());
    }
}
