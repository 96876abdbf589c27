use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diag::Span;
use crate::rtl::ast::{ModuleItem, SourceUnit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChunkKind {
    ModuleInterface,
    AlwaysBlock,
    Instance,
    Assign,
}

impl ChunkKind {
    pub fn label(self) -> &'static str {
        match self {
            ChunkKind::ModuleInterface => "module_interface",
            ChunkKind::AlwaysBlock => "always_block",
            ChunkKind::Instance => "instance",
            ChunkKind::Assign => "assign",
        }
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A semantic fragment of one module.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub kind: ChunkKind,
    pub owner_module: String,
    /// `<kind> in <module>` header line followed by the pretty-printed source.
    pub canonical_text: String,
    pub source_span: Span,
    /// For always blocks: assigned and read signal names. Empty otherwise.
    #[serde(default)]
    pub signals: BTreeSet<String>,
}

impl Chunk {
    fn new(kind: ChunkKind, module: &str, body: String, span: Span, signals: BTreeSet<String>) -> Self {
        let canonical_text = format!("{} in {}\n{}", kind.label(), module, body);
        Chunk { chunk_id: chunk_id(&canonical_text), kind, owner_module: module.to_string(), canonical_text, source_span: span, signals }
    }

    /// The source text without the header line.
    pub fn body(&self) -> &str {
        self.canonical_text.split_once('\n').map(|(_, b)| b).unwrap_or("")
    }
}

/// First 16 hex digits of the SHA-256 of the canonical text.
pub fn chunk_id(canonical_text: &str) -> String {
    let digest = Sha256::digest(canonical_text.as_bytes());
    hex::encode(&digest[..8])
}

/// Splits every module into interface, always-block, instance and
/// assign-group chunks. Consecutive continuous assignments form one group.
pub fn chunk_design(unit: &SourceUnit) -> Vec<Chunk> {
    let mut out = Vec::new();
    for m in &unit.modules {
        out.push(Chunk::new(ChunkKind::ModuleInterface, &m.name, m.header(), m.span.clone(), BTreeSet::new()));
        let mut group: Vec<String> = Vec::new();
        let mut group_span: Option<Span> = None;
        let flush = |group: &mut Vec<String>, span: &mut Option<Span>, out: &mut Vec<Chunk>| {
            if !group.is_empty() {
                out.push(Chunk::new(ChunkKind::Assign, &m.name, group.join("\n"), span.take().unwrap_or_default(), BTreeSet::new()));
                group.clear();
            }
        };
        for item in &m.items {
            match item {
                ModuleItem::Assign(a) => {
                    if group.is_empty() {
                        group_span = Some(a.span.clone());
                    }
                    group.push(a.to_string());
                }
                // Declarations do not belong to any chunk and do not break a group.
                ModuleItem::Net(_) => {}
                ModuleItem::Always(a) => {
                    flush(&mut group, &mut group_span, &mut out);
                    let signals = a.assigned_signals.union(&a.read_signals).cloned().collect();
                    out.push(Chunk::new(ChunkKind::AlwaysBlock, &m.name, a.to_string(), a.span.clone(), signals));
                }
                ModuleItem::Instance(i) => {
                    flush(&mut group, &mut group_span, &mut out);
                    out.push(Chunk::new(ChunkKind::Instance, &m.name, i.to_string(), i.span.clone(), BTreeSet::new()));
                }
            }
        }
        flush(&mut group, &mut group_span, &mut out);
    }
    out
}
