//! SystemVerilog subset front end: parse, validate, chunk.

pub mod ast;
pub mod chunk;
pub mod hierarchy;
pub mod lexer;
pub mod params;
pub mod parser;
mod validate;

use std::path::Path;

use thiserror::Error;

pub use ast::SourceUnit;
pub use chunk::{chunk_design, Chunk, ChunkKind};
pub use hierarchy::{hierarchy_tree, HierarchyNode};
pub use params::resolve_parameters;

use crate::diag::Diagnostic;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RtlError {
    #[error("unknown module '{0}'")]
    UnknownModule(String),
    #[error("module '{module}' has no parameter '{name}'")]
    UnknownParameter { module: String, name: String },
    #[error("cannot override localparam '{name}' of module '{module}'")]
    LocalparamOverride { module: String, name: String },
    #[error("non-constant parameter expression in '{module}': {detail}")]
    NonConstant { module: String, detail: String },
    #[error("circular parameter dependency in '{module}': {cycle}")]
    CircularParameter { module: String, cycle: String },
    #[error("instantiation cycle: {0}")]
    InstantiationCycle(String),
    #[error("{}", crate::diag::render(.0).trim_end())]
    Diagnostics(Vec<Diagnostic>),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Parses and validates a set of source files into one unit.
///
/// On failure every collected diagnostic is returned; a file with a syntax
/// error contributes its first error only.
pub fn parse_source<S: AsRef<str>, T: AsRef<str>>(texts: &[(S, T)]) -> Result<SourceUnit, Vec<Diagnostic>> {
    if texts.is_empty() {
        return Err(vec![Diagnostic {
            file: "<input>".into(),
            line: 0,
            col: 0,
            severity: crate::diag::Severity::Error,
            message: "no source files given".into(),
        }]);
    }
    let mut diags = Vec::new();
    let mut modules = Vec::new();
    for (name, contents) in texts {
        match parser::parse_file(name.as_ref(), contents.as_ref()) {
            Ok(ms) => modules.extend(ms),
            Err(d) => diags.push(d),
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    validate::resolve_positional(&mut modules, &mut diags);
    let unit = SourceUnit { modules };
    validate::validate_unit(&unit, &mut diags);
    if diags.iter().any(Diagnostic::is_error) {
        return Err(diags);
    }
    Ok(unit)
}

/// Reads every `.sv`/`.v` file in a directory (sorted by name), or a single file.
pub fn read_design_files(path: &Path) -> Result<Vec<(String, String)>, RtlError> {
    let io = |p: &Path, e: std::io::Error| RtlError::Io { path: p.display().to_string(), message: e.to_string() };
    let mut files = Vec::new();
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("sv" | "v")))
            .collect();
        entries.sort();
        for p in entries {
            let text = std::fs::read_to_string(&p).map_err(|e| io(&p, e))?;
            let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            files.push((name, text));
        }
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.push((name, text));
    }
    if files.is_empty() {
        return Err(RtlError::Io { path: path.display().to_string(), message: "no .sv or .v files found".into() });
    }
    Ok(files)
}

pub fn load_design(path: &Path) -> Result<SourceUnit, RtlError> {
    let files = read_design_files(path)?;
    parse_source(&files).map_err(RtlError::Diagnostics)
}
