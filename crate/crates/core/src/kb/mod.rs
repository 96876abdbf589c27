//! Per-design vector index over RTL chunks with exact structured lookups.

mod embed;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::{normalize, Embedder, Embedding, HttpEmbedder, TrigramEmbedder, DEFAULT_DIM};

use crate::rtl::{Chunk, ChunkKind};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KbError {
    #[error("the index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("unknown signal '{0}': no always block reads or writes it")]
    UnknownSignal(String),
    #[error("query embedded with '{query}' but the index was built with '{index}'")]
    EmbedderMismatch { index: String, query: String },
    #[error("embedding dimension {found} does not match the index dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding transport failure: {0}")]
    Transport(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed index line {line}: {message}")]
    Format { line: usize, message: String },
}

impl KbError {
    /// Machine-readable code surfaced to the agent.
    pub fn code(&self) -> &'static str {
        match self {
            KbError::EmptyIndex => "empty_index",
            KbError::InvalidK => "invalid_argument",
            KbError::UnknownModule(_) => "unknown_module",
            KbError::UnknownSignal(_) => "unknown_signal",
            KbError::EmbedderMismatch { .. } => "embedder_mismatch",
            KbError::DimensionMismatch { .. } => "dimension_mismatch",
            KbError::EmptyText => "empty_text",
            KbError::Transport(_) => "transport",
            KbError::Io(_) => "io",
            KbError::Format { .. } => "format",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub chunk: Chunk,
    pub vector: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    pub design_id: String,
    pub embedder_id: String,
    pub dim: usize,
    pub entries: Vec<Entry>,
    pub interface_index: BTreeMap<String, String>,
    pub signal_index: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    design_id: String,
    embedder_id: String,
    dim: usize,
    entries: usize,
}

/// Identifier derived from the chunk ids of a design.
pub fn design_id(chunks: &[Chunk]) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update(c.chunk_id.as_bytes());
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..8])
}

/// Ranking order: score descending, then chunk id, then insertion order.
fn rank(a: &(f64, &str, usize), b: &(f64, &str, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then(a.2.cmp(&b.2))
}

struct Ranked<'a>((f64, &'a str, usize));

impl PartialEq for Ranked<'_> {
    fn eq(&self, o: &Self) -> bool {
        rank(&self.0, &o.0) == Ordering::Equal
    }
}
impl Eq for Ranked<'_> {}
impl PartialOrd for Ranked<'_> {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ranked<'_> {
    fn cmp(&self, o: &Self) -> Ordering {
        rank(&self.0, &o.0)
    }
}

impl KnowledgeBase {
    pub fn build(design_id: impl Into<String>, chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<Self, KbError> {
        let texts: Vec<&str> = chunks.iter().map(|c| c.canonical_text.as_str()).collect();
        let vectors = if texts.is_empty() { Vec::new() } else { embedder.embed(&texts)? };
        let dim = vectors.first().map_or(0, |v| v.values.len());
        let mut entries = Vec::with_capacity(chunks.len());
        for (chunk, v) in chunks.into_iter().zip(vectors) {
            if v.values.len() != dim {
                return Err(KbError::DimensionMismatch { expected: dim, found: v.values.len() });
            }
            entries.push(Entry { chunk, vector: v.values });
        }
        Ok(Self::from_entries(design_id.into(), embedder.id(), dim, entries))
    }

    fn from_entries(design_id: String, embedder_id: String, dim: usize, entries: Vec<Entry>) -> Self {
        let mut interface_index = BTreeMap::new();
        let mut signal_index: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for e in &entries {
            match e.chunk.kind {
                ChunkKind::ModuleInterface => {
                    interface_index.insert(e.chunk.owner_module.clone(), e.chunk.chunk_id.clone());
                }
                ChunkKind::AlwaysBlock => {
                    for s in &e.chunk.signals {
                        signal_index.entry(s.clone()).or_default().insert(e.chunk.chunk_id.clone());
                    }
                }
                _ => {}
            }
        }
        KnowledgeBase { design_id, embedder_id, dim, entries, interface_index, signal_index }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.entries.iter().map(|e| &e.chunk).find(|c| c.chunk_id == chunk_id)
    }

    /// Top-`k` entries by cosine similarity to `query`.
    pub fn search_vector(&self, query: &Embedding, k: usize) -> Result<Vec<SearchHit>, KbError> {
        if k == 0 {
            return Err(KbError::InvalidK);
        }
        if self.entries.is_empty() {
            return Err(KbError::EmptyIndex);
        }
        if query.embedder_id != self.embedder_id {
            return Err(KbError::EmbedderMismatch { index: self.embedder_id.clone(), query: query.embedder_id.clone() });
        }
        if query.values.len() != self.dim {
            return Err(KbError::DimensionMismatch { expected: self.dim, found: query.values.len() });
        }
        // Max-heap of the k best seen so far, keyed so the worst is on top.
        let mut heap: BinaryHeap<Ranked> = BinaryHeap::with_capacity(k + 1);
        for (i, e) in self.entries.iter().enumerate() {
            let score: f64 = e.vector.iter().zip(&query.values).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
            // -0.0 and 0.0 must tie.
            let score = score + 0.0;
            heap.push(Ranked((score, e.chunk.chunk_id.as_str(), i)));
            if heap.len() > k {
                heap.pop();
            }
        }
        Ok(heap.into_sorted_vec().into_iter().map(|Ranked((score, id, _))| SearchHit { chunk_id: id.to_string(), score }).collect())
    }

    pub fn semantic_search(&self, embedder: &dyn Embedder, query: &str, k: usize) -> Result<Vec<SearchHit>, KbError> {
        if self.entries.is_empty() {
            return Err(KbError::EmptyIndex);
        }
        self.search_vector(&embedder.embed_text(query)?, k)
    }

    pub fn interface_query(&self, module: &str) -> Result<&Chunk, KbError> {
        self.interface_index.get(module).and_then(|id| self.chunk(id)).ok_or_else(|| KbError::UnknownModule(module.to_string()))
    }

    /// Always blocks reading or writing `signal`, in index order. A dotted
    /// name is matched on its last component.
    pub fn signal_blocks_query(&self, signal: &str) -> Result<Vec<&Chunk>, KbError> {
        let local = signal.rsplit('.').next().unwrap_or(signal);
        let ids = self.signal_index.get(local).ok_or_else(|| KbError::UnknownSignal(signal.to_string()))?;
        let mut seen = BTreeSet::new();
        Ok(self.entries.iter().map(|e| &e.chunk).filter(|c| ids.contains(&c.chunk_id) && seen.insert(&c.chunk_id)).collect())
    }

    /// Writes a header line then one `{chunk, vector}` record per line.
    pub fn save(&self, path: &Path) -> Result<(), KbError> {
        let io = |e: std::io::Error| KbError::Io(e.to_string());
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let header = Header { design_id: self.design_id.clone(), embedder_id: self.embedder_id.clone(), dim: self.dim, entries: self.entries.len() };
        writeln!(f, "{}", serde_json::to_string(&header).expect("serializable")).map_err(io)?;
        for e in &self.entries {
            writeln!(f, "{}", serde_json::to_string(e).expect("serializable")).map_err(io)?;
        }
        f.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, KbError> {
        let f = std::fs::File::open(path).map_err(|e| KbError::Io(format!("{}: {e}", path.display())))?;
        let mut lines = std::io::BufReader::new(f).lines();
        let bad = |line, e: &dyn std::fmt::Display| KbError::Format { line, message: e.to_string() };
        let first = lines.next().ok_or_else(|| bad(1, &"missing header"))?.map_err(|e| KbError::Io(e.to_string()))?;
        let header: Header = serde_json::from_str(&first).map_err(|e| bad(1, &e))?;
        let mut entries = Vec::with_capacity(header.entries);
        for (i, l) in lines.enumerate() {
            let l = l.map_err(|e| KbError::Io(e.to_string()))?;
            if l.trim().is_empty() {
                continue;
            }
            let e: Entry = serde_json::from_str(&l).map_err(|e| bad(i + 2, &e))?;
            if e.vector.len() != header.dim {
                return Err(KbError::DimensionMismatch { expected: header.dim, found: e.vector.len() });
            }
            entries.push(e);
        }
        if entries.len() != header.entries {
            return Err(bad(0, &format!("header announces {} entries, found {}", header.entries, entries.len())));
        }
        Ok(Self::from_entries(header.design_id, header.embedder_id, header.dim, entries))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rtl::{chunk_design, parse_source};

    const SRC: &str = "module top(input clk, input rst_n, input [7:0] a, input [7:0] b, output reg ready, output [7:0] sum);
  assign sum = a + b;
  always @(posedge clk or negedge rst_n) if (!rst_n) ready <= 1'b0; else ready <= a[0];
endmodule";

    fn kb() -> KnowledgeBase {
        let unit = parse_source(&[("top.sv", SRC)]).unwrap();
        let chunks = chunk_design(&unit);
        KnowledgeBase::build(design_id(&chunks), chunks, &TrigramEmbedder::default()).unwrap()
    }

    #[test]
    fn embedder_is_deterministic_and_normalized() {
        let e = TrigramEmbedder::default();
        let a = e.embed_text("reset behavior").unwrap();
        assert_eq!(a, e.embed_text("reset behavior").unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert!((a.dot(&a) - 1.0).abs() < 1e-12);
        assert_eq!(e.embed_text(""), Err(KbError::EmptyText));
    }

    #[test]
    fn exact_text_ranks_first() {
        let kb = kb();
        let target = &kb.entries[1].chunk;
        let hits = kb.semantic_search(&TrigramEmbedder::default(), &target.canonical_text, 10).unwrap();
        assert_eq!(hits.len(), kb.len());
        assert_eq!(hits[0].chunk_id, target.chunk_id);
        assert!((hits[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reset_query_prefers_reset_block() {
        let kb = kb();
        let e = TrigramEmbedder::default();
        let q = e.embed_text("reset behavior of ready register").unwrap();
        let score = |kind: ChunkKind| kb.entries.iter().find(|x| x.chunk.kind == kind).map(|x| x.vector.iter().zip(&q.values).map(|(a, b)| a * b).sum::<f64>()).unwrap();
        assert!(score(ChunkKind::AlwaysBlock) > score(ChunkKind::Assign));
    }

    #[test]
    fn structured_lookups() {
        let kb = kb();
        assert_eq!(kb.interface_query("top").unwrap().kind, ChunkKind::ModuleInterface);
        assert_eq!(kb.interface_query("nope").unwrap_err().code(), "unknown_module");
        assert_eq!(kb.signal_blocks_query("ready").unwrap().len(), 1);
        assert_eq!(kb.signal_blocks_query("rst_n").unwrap().len(), 1);
        assert_eq!(kb.signal_blocks_query("no_such_sig").unwrap_err().code(), "unknown_signal");
    }

    #[test]
    fn provenance_and_empty_index() {
        let kb = kb();
        let other = TrigramEmbedder { dim: 64 }.embed_text("x").unwrap();
        assert!(matches!(kb.search_vector(&other, 1), Err(KbError::EmbedderMismatch { .. })));
        let empty = KnowledgeBase::build("e", Vec::new(), &TrigramEmbedder::default()).unwrap();
        assert_eq!(empty.semantic_search(&TrigramEmbedder::default(), "x", 1), Err(KbError::EmptyIndex));
    }

    #[test]
    fn save_load_round_trip() {
        let kb = kb();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        kb.save(&p).unwrap();
        assert_eq!(KnowledgeBase::load(&p).unwrap(), kb);
    }
}
