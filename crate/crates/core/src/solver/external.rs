//! Adapter for an external formal tool: batch script emission, a
//! line-oriented log grammar, and a subprocess runner.
//!
//! Log grammar (one record per line):
//!
//! ```text
//! BOUND <n>
//! ERROR <file>:<line>[:<col>]: <message>
//! WARNING <file>:<line>[:<col>]: <message>
//! PROPERTY <label> : proven|cex|undetermined
//! MESSAGE <label> : <text>
//! VACUITY <label> : vacuous|non_vacuous|unknown
//! TRACE <label> length=<n> violating=<k>
//! SIGNAL <name> <v0> <v1> ...
//! END TRACE
//! ```
//!
//! Blank lines, `#` comments and `INFO` lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;

use regex::Regex;
use thiserror::Error;

use crate::design::Design;
use crate::diag::{Diagnostic, Severity};
use crate::solver::prove::{render_bind_file, reset_plan, AssertionSrc, Budget, ProofResult, PropertyResult, Status, Trace, BIND_FILE};

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("log line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend command failed ({status}): {stderr}")]
    Command { status: String, stderr: String },
}

/// Files of an external job: the design sources, the bind file and the script.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalJob {
    pub script: String,
    pub files: Vec<(String, String)>,
}

pub const SCRIPT_FILE: &str = "job.tcl";

/// Emits a deterministic batch script for the candidate.
pub fn emit_external_job(design: &Design, assertions: &[AssertionSrc], budget: &Budget) -> ExternalJob {
    let mut s = String::from("# proofloop external job\n");
    for (name, _) in &design.files {
        let _ = writeln!(s, "analyze -sv {name}");
    }
    let _ = writeln!(s, "analyze -sva {BIND_FILE}");
    let _ = writeln!(s, "elaborate -top {}", design.top);
    for c in design.flat.clocks() {
        let _ = writeln!(s, "clock {}", design.flat.signals[c].path);
    }
    let plan = reset_plan(design);
    if !plan.asserted.is_empty() {
        let expr: Vec<String> = plan.asserted.iter().map(|(n, v)| format!("{n} == {v}")).collect();
        let _ = writeln!(s, "reset -expression {{{}}}", expr.join(" && "));
    }
    let _ = writeln!(s, "set_prove_depth {}", budget.depth);
    let _ = writeln!(s, "set_prove_time_limit {}s", budget.wall_time.as_secs());
    for a in assertions {
        let _ = writeln!(s, "prove -property {}.{}", design.top, a.label);
        let _ = writeln!(s, "vacuity -property {}.{}", design.top, a.label);
    }
    s.push_str("report -log\n");
    let mut files = design.files.clone();
    files.push((BIND_FILE.to_string(), render_bind_file(&design.top, assertions)));
    ExternalJob { script: s, files }
}

impl ExternalJob {
    pub fn write_to(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        for (n, c) in &self.files {
            std::fs::write(dir.join(n), c)?;
        }
        let p = dir.join(SCRIPT_FILE);
        std::fs::write(&p, &self.script)?;
        Ok(p)
    }
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Proven => "proven",
        Status::Falsified => "cex",
        Status::Undetermined => "undetermined",
    }
}

/// Renders a result in the log grammar; inverse of [`parse_external_log`].
pub fn render_log(r: &ProofResult) -> String {
    let mut s = String::from("# proofloop log\n");
    let _ = writeln!(s, "BOUND {}", r.bound_reached);
    for d in &r.diagnostics {
        let kind = if d.severity == Severity::Error { "ERROR" } else { "WARNING" };
        let pos = if d.col > 0 { format!("{}:{}", d.line, d.col) } else { d.line.to_string() };
        let _ = writeln!(s, "{kind} {}:{pos}: {}", d.file, d.message.replace('\n', " "));
    }
    for p in &r.per_property {
        let _ = writeln!(s, "PROPERTY {} : {}", p.label, status_word(p.status));
        if !p.message.is_empty() {
            let _ = writeln!(s, "MESSAGE {} : {}", p.label, p.message.replace('\n', " "));
        }
        if let Some(v) = p.vacuous {
            let _ = writeln!(s, "VACUITY {} : {}", p.label, if v { "vacuous" } else { "non_vacuous" });
        }
        if let Some(t) = &p.counterexample {
            let _ = writeln!(s, "TRACE {} length={} violating={}", p.label, t.length, t.violating_cycle);
            for (name, vals) in &t.signals {
                let vs: Vec<String> = vals.iter().map(u64::to_string).collect();
                let _ = writeln!(s, "SIGNAL {name} {}", vs.join(" "));
            }
            s.push_str("END TRACE\n");
        }
    }
    s
}

struct Patterns {
    diag: Regex,
    record: Regex,
    trace: Regex,
}

fn patterns() -> &'static Patterns {
    static P: std::sync::OnceLock<Patterns> = std::sync::OnceLock::new();
    P.get_or_init(|| Patterns {
        diag: Regex::new(r"^(ERROR|WARNING) (.+?):(\d+)(?::(\d+))?: (.*)$").unwrap(),
        record: Regex::new(r"^(PROPERTY|MESSAGE|VACUITY) (\S+) : (.*)$").unwrap(),
        trace: Regex::new(r"^TRACE (\S+) length=(\d+) violating=(\d+)$").unwrap(),
    })
}

/// Parses a tool log into a result. `compile_ok` is true iff no `ERROR`
/// record is present.
pub fn parse_external_log(text: &str) -> Result<ProofResult, ExternalError> {
    let pat = patterns();
    let mut diagnostics = Vec::new();
    let mut bound = 0u32;
    let mut props: Vec<PropertyResult> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut open: Option<(usize, Trace)> = None;
    let err = |line: usize, message: String| ExternalError::Parse { line, message };
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if let Some((pi, trace)) = open.as_mut() {
            if line == "END TRACE" {
                if let Some((k, v)) = trace.signals.iter().find(|(_, v)| v.len() != trace.length) {
                    return Err(err(n, format!("trace signal '{k}' has {} values, expected {}", v.len(), trace.length)));
                }
                let (pi, trace) = open.take().expect("open trace");
                props[pi].counterexample = Some(trace);
                continue;
            }
            let mut parts = line.split(' ');
            if parts.next() != Some("SIGNAL") {
                return Err(err(n, format!("expected SIGNAL or END TRACE inside trace of '{}', found '{line}'", props[*pi].label)));
            }
            let name = parts.next().filter(|s| !s.is_empty()).ok_or_else(|| err(n, "SIGNAL without a name".into()))?;
            let vals = parts.map(|v| v.parse::<u64>()).collect::<Result<Vec<_>, _>>().map_err(|e| err(n, format!("bad signal value: {e}")))?;
            trace.signals.insert(name.to_string(), vals);
            continue;
        }
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("INFO") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("BOUND ") {
            bound = rest.trim().parse().map_err(|_| err(n, format!("bad bound '{rest}'")))?;
        } else if let Some(c) = pat.diag.captures(line) {
            let severity = if &c[1] == "ERROR" { Severity::Error } else { Severity::Warning };
            diagnostics.push(Diagnostic {
                file: c[2].to_string(),
                line: c[3].parse().map_err(|_| err(n, "line number out of range".into()))?,
                col: c.get(4).map_or(Ok(0), |m| m.as_str().parse()).map_err(|_| err(n, "column out of range".into()))?,
                severity,
                message: c[5].to_string(),
            });
        } else if let Some(c) = pat.record.captures(line) {
            let label = c[2].to_string();
            let value = &c[3];
            match &c[1] {
                "PROPERTY" => {
                    let status = match value {
                        "proven" => Status::Proven,
                        "cex" => Status::Falsified,
                        "undetermined" => Status::Undetermined,
                        other => return Err(err(n, format!("unknown property status '{other}'"))),
                    };
                    if index.contains_key(&label) {
                        return Err(err(n, format!("duplicate PROPERTY record for '{label}'")));
                    }
                    index.insert(label.clone(), props.len());
                    props.push(PropertyResult { label, status, vacuous: None, counterexample: None, message: String::new() });
                }
                kind => {
                    let pi = *index.get(&label).ok_or_else(|| err(n, format!("{kind} for unknown property '{label}'")))?;
                    if kind == "MESSAGE" {
                        props[pi].message = value.to_string();
                    } else {
                        props[pi].vacuous = match value {
                            "vacuous" => Some(true),
                            "non_vacuous" => Some(false),
                            "unknown" => None,
                            other => return Err(err(n, format!("unknown vacuity verdict '{other}'"))),
                        };
                    }
                }
            }
        } else if let Some(c) = pat.trace.captures(line) {
            let pi = *index.get(&c[1]).ok_or_else(|| err(n, format!("TRACE for unknown property '{}'", &c[1])))?;
            let length: usize = c[2].parse().map_err(|_| err(n, "bad trace length".into()))?;
            let violating_cycle: usize = c[3].parse().map_err(|_| err(n, "bad violating cycle".into()))?;
            if violating_cycle >= length {
                return Err(err(n, format!("violating cycle {violating_cycle} outside trace of length {length}")));
            }
            open = Some((pi, Trace { signals: BTreeMap::new(), length, violating_cycle }));
        } else {
            return Err(err(n, format!("unrecognized log line '{line}'")));
        }
    }
    if open.is_some() {
        return Err(err(text.lines().count(), "unterminated TRACE block".into()));
    }
    let compile_ok = !diagnostics.iter().any(Diagnostic::is_error);
    Ok(ProofResult { compile_ok, diagnostics, per_property: props, bound_reached: bound })
}

static JOB_LOCK: Mutex<()> = Mutex::new(());

/// Runs an external backend. `template` is a shell command in which
/// `{script}` and `{log}` are replaced by the script and log paths; the
/// command runs in the job directory.
pub fn run_external(design: &Design, assertions: &[AssertionSrc], budget: &Budget, template: &str, work_dir: &Path) -> Result<ProofResult, ExternalError> {
    let _guard = JOB_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let job = emit_external_job(design, assertions, budget);
    let script = job.write_to(work_dir)?;
    let log = work_dir.join("job.log");
    let cmd = template.replace("{script}", &script.display().to_string()).replace("{log}", &log.display().to_string());
    let out = Command::new("sh").arg("-c").arg(&cmd).current_dir(work_dir).output()?;
    if !out.status.success() {
        return Err(ExternalError::Command { status: out.status.to_string(), stderr: String::from_utf8_lossy(&out.stderr).into_owned() });
    }
    parse_external_log(&std::fs::read_to_string(&log)?)
}
