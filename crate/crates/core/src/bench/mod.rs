//! Benchmark cases, trial execution, reports and metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{run_agent, Ablation, AgentConfig, AgentResult, ChatModel, HttpChatModel, ScriptedModel, ToolContext};
use crate::design::Design;
use crate::kb::{design_id, Embedder, KnowledgeBase};
use crate::rtl::chunk_design;
use crate::solver::{ProofResult, Status};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no benchmark cases found under {0}")]
    EmptyRoot(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("duplicate case id '{id}' ({first} and {second})")]
    DuplicateCase { id: String, first: String, second: String },
    #[error("k must satisfy 1 <= k <= n (k={k}, n={n})")]
    InvalidK { k: usize, n: usize },
    #[error("no reports to aggregate")]
    NoReports,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io { path: path.display().to_string(), message: e.to_string() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Pipeline,
    Fsm,
    Other,
}

#[derive(Clone, Debug, Deserialize)]
struct Manifest {
    #[serde(default)]
    case_id: Option<String>,
    top: String,
    category: Category,
}

#[derive(Clone, Debug)]
pub struct BenchCase {
    pub case_id: String,
    pub dir: PathBuf,
    pub top: String,
    pub spec: String,
    pub category: Category,
    pub design: Design,
}

impl BenchCase {
    /// Trajectory for a trial: `trajectory.<trial>.jsonl` if present, else
    /// `trajectory.jsonl`.
    pub fn trajectory(&self, trial: usize) -> Option<PathBuf> {
        [self.dir.join(format!("trajectory.{trial}.jsonl")), self.dir.join("trajectory.jsonl")].into_iter().find(|p| p.is_file())
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Skipped {
    pub dir: String,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct LoadedSuite {
    pub cases: Vec<BenchCase>,
    pub skipped: Vec<Skipped>,
}

fn load_case(dir: &Path) -> Result<BenchCase, String> {
    let manifest_path = dir.join("case.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| format!("case.json: {e}"))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| format!("case.json: {e}"))?;
    let spec = std::fs::read_to_string(dir.join("spec.txt")).map_err(|e| format!("spec.txt: {e}"))?;
    if spec.trim().is_empty() {
        return Err("spec.txt is empty".into());
    }
    let design = Design::load(&dir.join("design"), &m.top).map_err(|e| format!("design: {e}"))?;
    let case_id = m.case_id.unwrap_or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    Ok(BenchCase { case_id, dir: dir.to_path_buf(), top: m.top, spec, category: m.category, design })
}

/// Loads every case directory below `root`, sorted by case id. Malformed
/// cases are skipped and listed; duplicate ids are an error.
pub fn load_cases(root: &Path) -> Result<LoadedSuite, BenchError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| io_err(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut cases: Vec<BenchCase> = Vec::new();
    let mut skipped = Vec::new();
    for d in dirs {
        match load_case(&d) {
            Ok(c) => {
                if let Some(prev) = cases.iter().find(|p| p.case_id == c.case_id) {
                    return Err(BenchError::DuplicateCase {
                        id: c.case_id.clone(),
                        first: prev.dir.display().to_string(),
                        second: d.display().to_string(),
                    });
                }
                cases.push(c);
            }
            Err(reason) => {
                log::warn!("skipping {}: {reason}", d.display());
                skipped.push(Skipped { dir: d.display().to_string(), reason });
            }
        }
    }
    if cases.is_empty() {
        return Err(BenchError::EmptyRoot(root.display().to_string()));
    }
    cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
    Ok(LoadedSuite { cases, skipped })
}

/// Where trial conversations come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum LlmSource {
    /// Per-case trajectory files, or one file for every case.
    Replay { file: Option<PathBuf> },
    Live { url: String, api_key: Option<String>, model: String },
}

impl LlmSource {
    pub fn model_for(&self, case: &BenchCase, trial: usize) -> Result<Box<dyn ChatModel>, String> {
        match self {
            LlmSource::Replay { file } => {
                let path = file.clone().or_else(|| case.trajectory(trial)).ok_or_else(|| format!("no trajectory file for case '{}'", case.case_id))?;
                Ok(Box::new(ScriptedModel::load(&path).map_err(|e| e.to_string())?))
            }
            LlmSource::Live { url, api_key, model } => Ok(Box::new(HttpChatModel::new(url, api_key.clone(), model))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub trials: usize,
    pub jobs: usize,
    pub agent: AgentConfig,
    pub llm: LlmSource,
    pub base_seed: u64,
    /// Func success also requires every proof to be non-vacuous.
    pub func_requires_non_vacuous: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            trials: 5,
            jobs: 1,
            agent: AgentConfig::default(),
            llm: LlmSource::Replay { file: None },
            base_seed: 0,
            func_requires_non_vacuous: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub proven: usize,
    pub falsified: usize,
    pub undetermined: usize,
    pub vacuous: usize,
}

impl Counts {
    pub fn of(r: &ProofResult) -> Counts {
        Counts {
            proven: r.count(Status::Proven),
            falsified: r.count(Status::Falsified),
            undetermined: r.count(Status::Undetermined),
            vacuous: r.per_property.iter().filter(|p| p.vacuous == Some(true)).count(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSummary {
    pub total: usize,
    pub rejected: usize,
    pub by_tool: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    pub trial_index: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub rounds: Vec<ProofResult>,
    pub best_round: Option<usize>,
    pub syntax_score: u8,
    pub functionality: f64,
    pub total_assertions: usize,
    pub counts: Counts,
    pub fully_functional: bool,
    pub rounds_phase_a: usize,
    pub rounds_phase_b: usize,
    pub tools: ToolSummary,
    pub termination_reason: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CaseReport {
    fn failed(case_id: &str, trial: usize, seed: u64, ablation: Ablation, error: String) -> Self {
        CaseReport {
            case_id: case_id.to_string(),
            trial_index: trial,
            seed,
            ablation,
            rounds: Vec::new(),
            best_round: None,
            syntax_score: 0,
            functionality: 0.0,
            total_assertions: 0,
            counts: Counts::default(),
            fully_functional: false,
            rounds_phase_a: 0,
            rounds_phase_b: 0,
            tools: ToolSummary::default(),
            termination_reason: "error".into(),
            error: Some(error),
        }
    }

    /// Scores the agent's final candidate. Undetermined assertions count in
    /// the functionality denominator only.
    pub fn from_result(case_id: &str, trial: usize, seed: u64, ablation: Ablation, r: &AgentResult, require_non_vacuous: bool) -> Self {
        let mut rep = CaseReport::failed(case_id, trial, seed, ablation, String::new());
        rep.error = None;
        rep.rounds = r.rounds.iter().map(|x| x.result.clone()).collect();
        rep.best_round = r.best_round;
        rep.rounds_phase_a = r.rounds_used_phase_a;
        rep.rounds_phase_b = r.rounds_used_phase_b;
        rep.termination_reason = r.termination_reason.clone();
        rep.tools.total = r.tool_call_log.len();
        rep.tools.rejected = r.rejected_tool_calls;
        for e in &r.tool_call_log {
            *rep.tools.by_tool.entry(e.call.name.clone()).or_default() += 1;
        }
        if let (Some(c), Some(p)) = (&r.candidate, &r.proof) {
            rep.total_assertions = c.assertions.len();
            rep.syntax_score = u8::from(p.compile_ok);
            if p.compile_ok {
                rep.counts = Counts::of(p);
                if rep.total_assertions > 0 {
                    rep.functionality = rep.counts.proven as f64 / rep.total_assertions as f64;
                }
                rep.fully_functional = rep.total_assertions > 0
                    && rep.counts.proven == rep.total_assertions
                    && (!require_non_vacuous || rep.counts.vacuous == 0);
            }
        }
        rep
    }
}

/// Per-trial seed derived from the base seed, case and trial.
pub fn trial_seed(base: u64, case_id: &str, trial: usize) -> u64 {
    let d = Sha256::digest(format!("{base}:{case_id}:{trial}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Everything one trial produced.
pub struct TrialOutput {
    pub report: CaseReport,
    pub agent: Option<AgentResult>,
    pub elapsed_ms: u128,
}

fn run_one(case: &BenchCase, kb: &KnowledgeBase, embedder: &dyn Embedder, trial: usize, cfg: &BenchConfig) -> TrialOutput {
    let start = Instant::now();
    let seed = trial_seed(cfg.base_seed, &case.case_id, trial);
    let ablation = cfg.agent.ablation;
    let mut model = match cfg.llm.model_for(case, trial) {
        Ok(m) => m,
        Err(e) => {
            return TrialOutput { report: CaseReport::failed(&case.case_id, trial, seed, ablation, e), agent: None, elapsed_ms: start.elapsed().as_millis() }
        }
    };
    let mut agent_cfg = cfg.agent.clone();
    agent_cfg.sampling.seed = Some(seed);
    agent_cfg.budget.seed = seed;
    let ctx = ToolContext { design: &case.design, kb, embedder };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_agent(&case.spec, &case.design, &ctx, model.as_mut(), &agent_cfg)));
    let elapsed_ms = start.elapsed().as_millis();
    match result {
        Ok(r) => TrialOutput {
            report: CaseReport::from_result(&case.case_id, trial, seed, ablation, &r, cfg.func_requires_non_vacuous),
            agent: Some(r),
            elapsed_ms,
        },
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into());
            TrialOutput { report: CaseReport::failed(&case.case_id, trial, seed, ablation, format!("trial crashed: {msg}")), agent: None, elapsed_ms }
        }
    }
}

/// Runs `trials` trials per case on a pool of `jobs` workers. Results are in
/// (case, trial) order. When `out` is given each trial's artifacts are
/// written as soon as it finishes.
pub fn run_trials(cases: &[BenchCase], cfg: &BenchConfig, embedder: &dyn Embedder, out: Option<&Path>) -> Vec<TrialOutput> {
    let kbs: Vec<Result<KnowledgeBase, String>> = cases
        .iter()
        .map(|c| {
            let chunks = chunk_design(&c.design.unit);
            KnowledgeBase::build(design_id(&chunks), chunks, embedder).map_err(|e| e.to_string())
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cases.len()).flat_map(|c| (0..cfg.trials).map(move |t| (c, t))).collect();
    let write_lock = Mutex::new(());
    let work = || {
        jobs.par_iter()
            .map(|&(ci, t)| {
                let case = &cases[ci];
                let output = match &kbs[ci] {
                    Ok(kb) => run_one(case, kb, embedder, t, cfg),
                    Err(e) => TrialOutput {
                        report: CaseReport::failed(&case.case_id, t, trial_seed(cfg.base_seed, &case.case_id, t), cfg.agent.ablation, format!("index: {e}")),
                        agent: None,
                        elapsed_ms: 0,
                    },
                };
                if let Some(dir) = out {
                    let _guard = write_lock.lock().unwrap_or_else(|e| e.into_inner());
                    if let Err(e) = write_trial(dir, &output) {
                        log::error!("writing report for {}/{t}: {e}", case.case_id);
                    }
                }
                output
            })
            .collect::<Vec<_>>()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), BenchError> {
    if let Some(p) = path.parent() {
        std::fs::create_dir_all(p).map_err(|e| io_err(p, e))?;
    }
    let mut text = serde_json::to_string_pretty(v).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct Transcript<'a> {
    messages: &'a [crate::agent::Message],
    tool_call_log: &'a [crate::agent::ToolLogEntry],
    rejected_tool_calls: usize,
    termination_reason: &'a str,
}

/// `<dir>/<case>/<trial>/{transcript.json, rounds/<n>.json, report.json}`.
pub fn write_trial(dir: &Path, t: &TrialOutput) -> Result<(), BenchError> {
    write_trial_at(&dir.join(&t.report.case_id).join(t.report.trial_index.to_string()), t)
}

/// Writes one trial's artifacts directly into `base`.
pub fn write_trial_at(base: &Path, t: &TrialOutput) -> Result<(), BenchError> {
    if let Some(a) = &t.agent {
        let tr = Transcript {
            messages: &a.conversation.messages,
            tool_call_log: &a.tool_call_log,
            rejected_tool_calls: a.rejected_tool_calls,
            termination_reason: &a.termination_reason,
        };
        write_json(&base.join("transcript.json"), &tr)?;
        for r in &a.rounds {
            write_json(&base.join("rounds").join(format!("{}.json", r.round)), r)?;
        }
    }
    write_json(&base.join("report.json"), &t.report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reports: usize,
    pub syntax: f64,
    pub functionality: f64,
    pub proven: usize,
    pub falsified: usize,
    pub undetermined: usize,
    pub vacuous: usize,
}

// Order-independent sum: the same multiset always gives the same bits.
fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.into_iter().sum()
}

pub fn aggregate_metrics(reports: &[CaseReport]) -> Result<Summary, BenchError> {
    if reports.is_empty() {
        return Err(BenchError::NoReports);
    }
    let n = reports.len() as f64;
    let syntax: usize = reports.iter().map(|r| usize::from(r.syntax_score)).sum();
    Ok(Summary {
        reports: reports.len(),
        syntax: 100.0 * syntax as f64 / n,
        functionality: 100.0 * sorted_sum(reports.iter().map(|r| r.functionality).collect()) / n,
        proven: reports.iter().map(|r| r.counts.proven).sum(),
        falsified: reports.iter().map(|r| r.counts.falsified).sum(),
        undetermined: reports.iter().map(|r| r.counts.undetermined).sum(),
        vacuous: reports.iter().map(|r| r.counts.vacuous).sum(),
    })
}

/// Unbiased estimate of the chance that at least one of `k` samples drawn
/// from the `n` trials succeeds: `1 - C(n-c, k) / C(n, k)`.
pub fn func_at_k(outcomes: &[bool], k: usize) -> Result<f64, BenchError> {
    let n = outcomes.len();
    if k == 0 || k > n {
        return Err(BenchError::InvalidK { k, n });
    }
    let c = outcomes.iter().filter(|o| **o).count();
    if n - c < k {
        return Ok(1.0);
    }
    // C(n-c, k) / C(n, k) = prod_{i=n-c+1..=n} (1 - k/i)
    let miss: f64 = ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product();
    Ok(1.0 - miss)
}

/// Mean over cases of the per-case Func@k.
pub fn mean_func_at_k(reports: &[CaseReport], k: usize) -> Result<f64, BenchError> {
    let mut by_case: BTreeMap<&str, Vec<(usize, bool)>> = BTreeMap::new();
    for r in reports {
        by_case.entry(&r.case_id).or_default().push((r.trial_index, r.fully_functional));
    }
    if by_case.is_empty() {
        return Err(BenchError::NoReports);
    }
    let mut vals = Vec::new();
    for v in by_case.values_mut() {
        v.sort();
        let outcomes: Vec<bool> = v.iter().map(|x| x.1).collect();
        vals.push(func_at_k(&outcomes, k)?);
    }
    let n = vals.len() as f64;
    Ok(sorted_sum(vals) / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ablation: Ablation,
    pub trials: usize,
    pub cases: Vec<String>,
    pub summary: Summary,
    pub func_at_1: Option<f64>,
    pub func_at_n: Option<f64>,
    pub skipped: Vec<String>,
    pub failed_trials: usize,
}

pub fn run_summary(reports: &[CaseReport], ablation: Ablation, trials: usize, skipped: &[Skipped]) -> Result<RunSummary, BenchError> {
    let mut cases: Vec<String> = reports.iter().map(|r| r.case_id.clone()).collect();
    cases.sort();
    cases.dedup();
    Ok(RunSummary {
        ablation,
        trials,
        cases,
        summary: aggregate_metrics(reports)?,
        func_at_1: mean_func_at_k(reports, 1).ok(),
        func_at_n: mean_func_at_k(reports, trials).ok(),
        skipped: skipped.iter().map(|s| format!("{}: {}", s.dir, s.reason)).collect(),
        failed_trials: reports.iter().filter(|r| r.error.is_some()).count(),
    })
}

/// Table-style CSV: one row per case (mean over trials) and a total row.
pub fn summary_csv(reports: &[CaseReport], run: &RunSummary) -> String {
    let mut s = String::from("Case,Ablation,Trials,Syntax,Functionality,Proven,Falsified,Undetermined,Vacuous,Func@1\n");
    let mut by_case: BTreeMap<&str, Vec<CaseReport>> = BTreeMap::new();
    for r in reports {
        by_case.entry(&r.case_id).or_default().push(r.clone());
    }
    for (case, rs) in &by_case {
        let Ok(m) = aggregate_metrics(rs) else { continue };
        let f1 = mean_func_at_k(rs, 1).map(|v| format!("{v:.3}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{case},{},{},{:.1},{:.1},{},{},{},{},{f1}",
            run.ablation,
            rs.len(),
            m.syntax,
            m.functionality,
            m.proven,
            m.falsified,
            m.undetermined,
            m.vacuous
        );
    }
    let m = &run.summary;
    let f1 = run.func_at_1.map(|v| format!("{v:.3}")).unwrap_or_default();
    let _ = writeln!(
        s,
        "ALL,{},{},{:.1},{:.1},{},{},{},{},{f1}",
        run.ablation, m.reports, m.syntax, m.functionality, m.proven, m.falsified, m.undetermined, m.vacuous
    );
    s
}

/// Writes `summary.json`, `summary.csv` and `timing.json` for a finished run.
/// Wall-clock times live only in `timing.json`.
pub fn write_run(dir: &Path, outputs: &[TrialOutput], run: &RunSummary) -> Result<(), BenchError> {
    let reports: Vec<CaseReport> = outputs.iter().map(|o| o.report.clone()).collect();
    write_json(&dir.join("summary.json"), run)?;
    let csv = summary_csv(&reports, run);
    std::fs::write(dir.join("summary.csv"), csv).map_err(|e| io_err(dir, e))?;
    let timing: BTreeMap<String, u128> = outputs.iter().map(|o| (format!("{}/{}", o.report.case_id, o.report.trial_index), o.elapsed_ms)).collect();
    write_json(&dir.join("timing.json"), &timing)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(case: &str, trial: usize, ok: bool, proven: usize, falsified: usize, undetermined: usize) -> CaseReport {
        let mut r = CaseReport::failed(case, trial, 0, Ablation::None, String::new());
        r.error = None;
        r.syntax_score = u8::from(ok);
        r.total_assertions = proven + falsified + undetermined;
        r.counts = Counts { proven, falsified, undetermined, vacuous: 0 };
        if ok && r.total_assertions > 0 {
            r.functionality = proven as f64 / r.total_assertions as f64;
        }
        r
    }

    #[test]
    fn func_at_k_examples() {
        assert_eq!(func_at_k(&[true; 5], 1).unwrap(), 1.0);
        assert_eq!(func_at_k(&[false; 5], 3).unwrap(), 0.0);
        let two = [true, true, false, false, false];
        assert!((func_at_k(&two, 1).unwrap() - 0.4).abs() < 1e-12);
        assert!((func_at_k(&two, 3).unwrap() - 0.9).abs() < 1e-12);
        assert!(matches!(func_at_k(&two, 6), Err(BenchError::InvalidK { .. })));
    }

    #[test]
    fn syntax_and_functionality() {
        let rs = vec![report("a", 0, true, 3, 1, 0), report("b", 0, true, 1, 0, 0), report("c", 0, true, 0, 1, 0), report("d", 0, false, 0, 0, 0)];
        let m = aggregate_metrics(&rs).unwrap();
        assert_eq!(m.syntax, 75.0);
        assert_eq!(rs[0].functionality, 0.75);
        assert_eq!((m.proven, m.falsified), (4, 2));
    }

    #[test]
    fn undetermined_in_denominator() {
        let r = report("a", 0, true, 1, 0, 1);
        assert_eq!(r.functionality, 0.5);
    }
}
