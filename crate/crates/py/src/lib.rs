//! Python bindings: design loading, retrieval, structural queries and the
//! bounded checker.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use proofloop::bench;
use proofloop::kb::{design_id, KnowledgeBase, TrigramEmbedder};
use proofloop::rtl::chunk_design;
use proofloop::solver::{self, AssertionSrc, Budget};
use proofloop::structure::{ConeDirection, Polarity, ResetKind};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// An elaborated design with its retrieval index.
#[pyclass(name = "Design", frozen)]
struct PyDesign {
    design: proofloop::Design,
    kb: KnowledgeBase,
    embedder: TrigramEmbedder,
}

impl PyDesign {
    fn wrap(design: proofloop::Design) -> PyResult<Self> {
        let embedder = TrigramEmbedder::default();
        let chunks = chunk_design(&design.unit);
        let kb = KnowledgeBase::build(design_id(&chunks), chunks, &embedder).map_err(value_err)?;
        Ok(PyDesign { design, kb, embedder })
    }
}

#[pymethods]
impl PyDesign {
    /// Loads every .sv/.v file in `path` (or the single file) and elaborates `top`.
    #[staticmethod]
    fn load(path: PathBuf, top: &str) -> PyResult<Self> {
        Self::wrap(proofloop::Design::load(&path, top).map_err(value_err)?)
    }

    #[staticmethod]
    fn from_text(text: &str, top: &str) -> PyResult<Self> {
        Self::wrap(proofloop::Design::from_text(text, top).map_err(value_err)?)
    }

    #[getter]
    fn top(&self) -> &str {
        &self.design.top
    }

    /// `(chunk_id, kind, module, canonical_text)` for every chunk.
    fn chunks(&self) -> Vec<(String, String, String, String)> {
        self.kb.entries.iter().map(|e| (e.chunk.chunk_id.clone(), e.chunk.kind.label().to_string(), e.chunk.owner_module.clone(), e.chunk.canonical_text.clone())).collect()
    }

    /// Top-`k` `(chunk_id, score)` pairs.
    #[pyo3(signature = (query, k = 5))]
    fn search(&self, query: &str, k: usize) -> PyResult<Vec<(String, f64)>> {
        let hits = self.kb.semantic_search(&self.embedder, query, k).map_err(value_err)?;
        Ok(hits.into_iter().map(|h| (h.chunk_id, h.score)).collect())
    }

    #[pyo3(signature = (signal, direction = "fanin", depth = None))]
    fn cone(&self, signal: &str, direction: &str, depth: Option<usize>) -> PyResult<Vec<String>> {
        let dir: ConeDirection = direction.parse().map_err(PyValueError::new_err)?;
        self.design.graph.cone(signal, dir, depth).map_err(value_err)
    }

    fn flop_info<'py>(&self, py: Python<'py>, reg: &str) -> PyResult<Bound<'py, PyDict>> {
        let f = self.design.graph.flop_properties(reg).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("clock", &f.clock)?;
        d.set_item("edge", proofloop::structure::edge_name(f.edge))?;
        d.set_item("data_input", &f.data_input)?;
        match &f.reset {
            Some(r) => {
                let rd = PyDict::new(py);
                rd.set_item("signal", &r.signal)?;
                rd.set_item("active_high", r.polarity == Polarity::ActiveHigh)?;
                rd.set_item("sync", r.kind == ResetKind::Sync)?;
                rd.set_item("value", r.value)?;
                d.set_item("reset", rd)?;
            }
            None => d.set_item("reset", py.None())?,
        }
        Ok(d)
    }

    /// Checks `label: assert property (...);` lines against the design and
    /// returns the result as a JSON string.
    #[pyo3(signature = (sva, depth = 20))]
    fn verify(&self, py: Python<'_>, sva: &str, depth: u32) -> PyResult<String> {
        let assertions: Vec<AssertionSrc> = proofloop::cli::read_sva(sva).ok_or_else(|| PyValueError::new_err("no `assert property` statements found"))?;
        let budget = Budget { depth, ..Budget::default() };
        let design = &self.design;
        let r = py.detach(|| solver::prove(design, &assertions, &budget));
        serde_json::to_string(&r).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    /// `(label, status)` pairs; status is proven, falsified or undetermined,
    /// or "compile_error" for every label when the candidate does not compile.
    #[pyo3(signature = (sva, depth = 20))]
    fn statuses(&self, py: Python<'_>, sva: &str, depth: u32) -> PyResult<Vec<(String, String)>> {
        let assertions: Vec<AssertionSrc> = proofloop::cli::read_sva(sva).ok_or_else(|| PyValueError::new_err("no `assert property` statements found"))?;
        let budget = Budget { depth, ..Budget::default() };
        let design = &self.design;
        let r = py.detach(|| solver::prove(design, &assertions, &budget));
        if !r.compile_ok {
            return Ok(assertions.into_iter().map(|a| (a.label, "compile_error".to_string())).collect());
        }
        Ok(r.per_property.into_iter().map(|p| (p.label, p.status.as_str().to_string())).collect())
    }
}

/// Probability that at least one of `k` trials drawn from `outcomes` succeeds.
#[pyfunction]
fn func_at_k(outcomes: Vec<bool>, k: usize) -> PyResult<f64> {
    bench::func_at_k(&outcomes, k).map_err(value_err)
}

#[pymodule]
fn proofloop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(func_at_k, m)?)?;
    Ok(())
}
