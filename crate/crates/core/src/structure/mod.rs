//! Signal-dependency graph with cone and flip-flop queries.

mod flop;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flop::{FlopInfo, Polarity, ResetInfo, ResetKind};

use crate::elab::{FlatDesign, Origin, ProcessKind, SignalKind};
use crate::rtl::ast::Edge;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("unknown signal '{0}'")]
    UnknownSignal(String),
    #[error("'{0}' is not a flip-flop (no clocked block assigns it)")]
    NotAFlop(String),
    #[error("'{0}' is assigned in more than one clocked block")]
    MultiDriver(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalNode {
    pub name: String,
    /// Dotted hierarchical path; equal to `name` at the top level.
    pub path: String,
    pub width: u32,
    pub kind: SignalKind,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DepEdge {
    pub driver: usize,
    pub driven: usize,
    pub origin: Origin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConeDirection {
    Fanin,
    Fanout,
}

impl std::str::FromStr for ConeDirection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fanin" => Ok(ConeDirection::Fanin),
            "fanout" => Ok(ConeDirection::Fanout),
            other => Err(format!("direction must be 'fanin' or 'fanout', got '{other}'")),
        }
    }
}

/// Word-level dependency graph of an elaborated design.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignGraph {
    pub top: String,
    pub nodes: Vec<SignalNode>,
    pub edges: Vec<DepEdge>,
    pub flops: BTreeMap<String, FlopInfo>,
    /// Registers assigned in more than one clocked block.
    pub multi_driven: BTreeSet<String>,
    /// Signals assigned only combinationally.
    pub combinational: BTreeSet<String>,
    #[serde(skip)]
    succ: Vec<Vec<usize>>,
    #[serde(skip)]
    pred: Vec<Vec<usize>>,
}

impl DesignGraph {
    /// Builds a graph from explicit nodes and edges.
    pub fn from_parts(top: String, nodes: Vec<SignalNode>, edges: Vec<DepEdge>) -> Self {
        let mut g = DesignGraph {
            top,
            nodes,
            edges,
            flops: BTreeMap::new(),
            multi_driven: BTreeSet::new(),
            combinational: BTreeSet::new(),
            succ: Vec::new(),
            pred: Vec::new(),
        };
        g.rebuild_adjacency();
        g
    }

    /// Restores adjacency lists after deserialization.
    pub fn rebuild_adjacency(&mut self) {
        self.edges.sort();
        self.edges.dedup();
        let n = self.nodes.len();
        self.succ = vec![Vec::new(); n];
        self.pred = vec![Vec::new(); n];
        for e in &self.edges {
            self.succ[e.driver].push(e.driven);
            self.pred[e.driven].push(e.driver);
        }
        for l in self.succ.iter_mut().chain(self.pred.iter_mut()) {
            l.sort_unstable();
            l.dedup();
        }
    }

    pub fn index_of(&self, path: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.path == path)
    }

    pub fn has_edge(&self, driver: &str, driven: &str) -> bool {
        match (self.index_of(driver), self.index_of(driven)) {
            (Some(a), Some(b)) => self.succ[a].contains(&b),
            _ => false,
        }
    }

    /// Transitive fan-in or fan-out of `signal`, excluding the seed itself,
    /// sorted by path. `depth` limits the number of edges followed.
    pub fn cone(&self, signal: &str, direction: ConeDirection, depth: Option<usize>) -> Result<Vec<String>, StructureError> {
        let seed = self.index_of(signal).ok_or_else(|| StructureError::UnknownSignal(signal.to_string()))?;
        let adj = match direction {
            ConeDirection::Fanin => &self.pred,
            ConeDirection::Fanout => &self.succ,
        };
        let mut seen = vec![false; self.nodes.len()];
        seen[seed] = true;
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([(seed, 0usize)]);
        while let Some((n, d)) = queue.pop_front() {
            if depth.is_some_and(|max| d >= max) {
                continue;
            }
            for &m in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    out.insert(self.nodes[m].path.clone());
                    queue.push_back((m, d + 1));
                }
            }
        }
        Ok(out.into_iter().collect())
    }

    pub fn flop_properties(&self, reg: &str) -> Result<&FlopInfo, StructureError> {
        if self.multi_driven.contains(reg) {
            return Err(StructureError::MultiDriver(reg.to_string()));
        }
        if let Some(f) = self.flops.get(reg) {
            return Ok(f);
        }
        if self.index_of(reg).is_some() {
            Err(StructureError::NotAFlop(reg.to_string()))
        } else {
            Err(StructureError::UnknownSignal(reg.to_string()))
        }
    }
}

/// Builds the dependency graph: one node per signal, one edge per
/// (read signal, assigned signal) pair of every assignment, where the reads
/// include dominating conditions and index expressions.
pub fn build_graph(design: &FlatDesign) -> DesignGraph {
    let nodes: Vec<SignalNode> = design
        .signals
        .iter()
        .map(|s| SignalNode {
            name: s.path.rsplit('.').next().unwrap_or(&s.path).to_string(),
            path: s.path.clone(),
            width: s.width,
            kind: s.kind,
        })
        .collect();
    let mut edges = BTreeSet::new();
    for p in &design.processes {
        p.body.for_each_assign(&mut Vec::new(), &mut |lhs, rhs, conds| {
            let mut written = BTreeSet::new();
            let mut reads = rhs.sigs();
            lhs.collect(&mut written, &mut reads);
            for c in conds {
                reads.extend(c.iter().copied());
            }
            for &w in &written {
                for &r in &reads {
                    edges.insert(DepEdge { driver: r, driven: w, origin: p.origin });
                }
            }
        });
    }
    let mut g = DesignGraph::from_parts(design.top.clone(), nodes, edges.into_iter().collect());

    let mut clocked_writers: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &design.processes {
        match &p.kind {
            ProcessKind::Seq { .. } => {
                for &w in &p.writes {
                    *clocked_writers.entry(w).or_default() += 1;
                }
            }
            ProcessKind::Comb => {
                for &w in &p.writes {
                    g.combinational.insert(design.signals[w].path.clone());
                }
            }
        }
    }
    for (&sig, &count) in &clocked_writers {
        if count > 1 {
            g.multi_driven.insert(design.signals[sig].path.clone());
        }
    }
    for p in &design.processes {
        if let (ProcessKind::Seq { clock, .. }, Some(src)) = (&p.kind, &p.source) {
            for &w in &p.writes {
                let path = &design.signals[w].path;
                if g.multi_driven.contains(path) {
                    continue;
                }
                let local = path.rsplit('.').next().unwrap_or(path);
                let params = &design.instances[&p.scope].params;
                let clock_path = (design.signals[clock.0].path.clone(), clock.1);
                let info = flop::classify(src, local, clock_path, &p.scope, params);
                g.flops.insert(path.clone(), info);
            }
        }
    }
    g
}

pub fn edge_name(e: Edge) -> &'static str {
    match e {
        Edge::Pos => "pos",
        Edge::Neg => "neg",
    }
}
