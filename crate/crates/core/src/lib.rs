//! Natural-language to SystemVerilog assertion pipeline.
//!
//! The crate is organized the way a design flows through it:
//!
//! - [`rtl`] parses a synthesizable SystemVerilog subset and splits it into
//!   semantic chunks (module interface, always block, instance, assign group).
//! - [`kb`] embeds those chunks into a per-design vector index.
//! - [`elab`] flattens the hierarchy into a word-level netlist that both the
//!   structural queries and the simulator run on.
//! - [`structure`] answers fan-in/fan-out cone and flip-flop queries.
//! - [`solver`] parses assertions and runs the bounded checker, vacuity
//!   analysis and the external-tool adapter.
//! - [`agent`] drives the two-phase tool-calling loop.
//! - [`bench`] loads benchmark cases, runs trials and computes metrics.
//! - [`cli`] is the command-line front end.

pub mod agent;
pub mod bench;
pub mod cli;
pub mod design;
pub mod diag;
pub mod elab;
pub mod kb;
pub mod rtl;
pub mod solver;
pub mod structure;

pub use design::{Design, DesignError};
pub use diag::{Diagnostic, Severity, Span};
