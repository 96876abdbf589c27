//! A loaded design: source files, parsed unit, flattened netlist and graph.

use std::path::Path;

use thiserror::Error;

use crate::elab::{elaborate, ElabError, FlatDesign};
use crate::rtl::{self, RtlError, SourceUnit};
use crate::structure::{build_graph, DesignGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DesignError {
    #[error(transparent)]
    Rtl(#[from] RtlError),
    #[error(transparent)]
    Elab(#[from] ElabError),
}

#[derive(Clone, Debug)]
pub struct Design {
    /// `(file name, contents)` in load order.
    pub files: Vec<(String, String)>,
    pub unit: SourceUnit,
    pub top: String,
    pub flat: FlatDesign,
    pub graph: DesignGraph,
}

impl Design {
    pub fn from_sources(files: Vec<(String, String)>, top: &str) -> Result<Self, DesignError> {
        let unit = rtl::parse_source(&files).map_err(RtlError::Diagnostics)?;
        let flat = elaborate(&unit, top)?;
        let graph = build_graph(&flat);
        Ok(Design { files, unit, top: top.to_string(), flat, graph })
    }

    pub fn load(path: &Path, top: &str) -> Result<Self, DesignError> {
        Self::from_sources(rtl::read_design_files(path)?, top)
    }

    /// Convenience for a single in-memory source file.
    pub fn from_text(text: &str, top: &str) -> Result<Self, DesignError> {
        Self::from_sources(vec![(format!("{top}.sv"), text.to_string())], top)
    }
}
