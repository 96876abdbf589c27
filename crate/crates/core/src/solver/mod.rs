//! Assertion parsing, the built-in bounded checker and the external-tool adapter.

pub mod external;
pub mod monitor;
pub mod prove;
pub mod sva;

pub use monitor::{compile_monitor, MonState, MonitorAutomaton};
pub use prove::{BIND_FILE, 
    check_syntax, prove, render_bind_file, replay_trace, reset_plan, trace_table, vacuity_check, AssertionSrc, Budget, ProofResult,
    PropertyResult, Status, Trace, Vacuity,
};
pub use sva::{parse_assertions, parse_property, AssertionDecl, PropertyAst};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::design::Design;

/// Which checker runs a candidate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Builtin,
    /// Shell command template with `{script}` and `{log}` placeholders; jobs
    /// are written below `work_dir`.
    External { command: String, work_dir: PathBuf },
}

static JOB_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Runs the candidate on the selected backend. Backend failures are errors;
/// callers decide how to record them.
pub fn verify(backend: &Backend, design: &Design, assertions: &[AssertionSrc], budget: &Budget) -> Result<ProofResult, String> {
    match backend {
        Backend::Builtin => Ok(prove(design, assertions, budget)),
        Backend::External { command, work_dir } => {
            let n = JOB_COUNTER.fetch_add(1, Ordering::SeqCst);
            let dir = work_dir.join(format!("job_{}_{n}", std::process::id()));
            external::run_external(design, assertions, budget, command, &dir).map_err(|e| e.to_string())
        }
    }
}
