//! Command-line entry point: `index`, `generate`, `verify`, `bench`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::agent::{extract_assertions, run_agent, Ablation, AgentConfig, ChatModel, HttpChatModel, Sampling, ScriptedModel, ToolContext};
use crate::bench::{self, BenchConfig, LlmSource, TrialOutput};
use crate::design::Design;
use crate::kb::{design_id, Embedder, HttpEmbedder, KnowledgeBase, TrigramEmbedder};
use crate::rtl::chunk_design;
use crate::solver::external::emit_external_job;
use crate::solver::{render_bind_file, trace_table, verify, AssertionSrc, Backend, Budget, ProofResult, Status};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Parser, Debug)]
#[command(name = "proofloop", version, about = "Tool-augmented SVA generation with a solver in the loop")]
pub struct Cli {
    /// JSON config file; its values apply where a flag is not given.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build and persist the knowledge base and design graph.
    Index(IndexArgs),
    /// Run the two-phase agent for one specification.
    Generate(GenerateArgs),
    /// Check an SVA file against a design (no agent).
    Verify(VerifyArgs),
    /// Run the benchmark harness over a case suite.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
struct DesignArgs {
    /// RTL file or directory of .sv/.v files.
    #[arg(long, value_name = "PATH")]
    design: PathBuf,
    /// Top module name.
    #[arg(long)]
    top: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BackendKind {
    Builtin,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum SamplingKind {
    Deterministic,
    Nucleus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EmbedderKind {
    Trigram,
    Http,
}

#[derive(Args, Debug, Clone, Default)]
struct SolverArgs {
    /// Proof depth in cycles [default: 32].
    #[arg(long)]
    depth: Option<u32>,
    /// Path budget: explored transitions per property [default: 65536].
    #[arg(long)]
    paths: Option<u64>,
    /// Wall-time limit per property in seconds [default: 30].
    #[arg(long, value_name = "SECS")]
    time_limit: Option<f64>,
    /// Random simulation runs after an inconclusive search [default: 1000].
    #[arg(long)]
    random_runs: Option<u32>,
    /// Checker backend [default: builtin].
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// External command template with {script} and {log} placeholders.
    #[arg(long, value_name = "TEMPLATE")]
    backend_cmd: Option<String>,
    /// Working directory for external jobs [default: system temp dir].
    #[arg(long, value_name = "DIR")]
    backend_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct AgentArgs {
    /// Replay a scripted trajectory (JSON lines) instead of a live model.
    #[arg(long, value_name = "FILE")]
    llm_replay: Option<PathBuf>,
    /// Chat-completions base URL [env: PROOFLOOP_LLM_URL].
    #[arg(long)]
    llm_url: Option<String>,
    /// Model name [env: PROOFLOOP_LLM_MODEL].
    #[arg(long)]
    llm_model: Option<String>,
    /// Capability to remove [default: none].
    #[arg(long, value_name = "ABLATION")]
    ablate: Option<Ablation>,
    /// Phase A (tool use) round cap [default: 6].
    #[arg(long)]
    phase_a_rounds: Option<usize>,
    /// Phase B (verify and repair) round cap [default: 3].
    #[arg(long)]
    phase_b_rounds: Option<usize>,
    /// Sampling mode.
    #[arg(long, value_enum)]
    sampling: Option<SamplingKind>,
    /// Base seed for sampling and random simulation [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// File with a replacement system prompt.
    #[arg(long, value_name = "FILE")]
    system_prompt: Option<PathBuf>,
    /// Observation truncation cap in characters [default: 4000].
    #[arg(long)]
    observation_cap: Option<usize>,
    /// Embedder for the knowledge base [default: trigram].
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
}

#[derive(Args, Debug)]
struct IndexArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Output directory for kb.jsonl and graph.json [default: index].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Embedder for the knowledge base [default: trigram].
    #[arg(long, value_enum)]
    embedder: Option<EmbedderKind>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Natural-language specification file.
    #[arg(long, value_name = "FILE")]
    spec: PathBuf,
    /// Directory for transcript.json, rounds/ and report.json.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    agent: AgentArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// File with `label: assert property (...);` lines.
    #[arg(long, value_name = "FILE")]
    sva: PathBuf,
    /// Print the result as JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Write the external-tool job script here and exit without checking.
    #[arg(long, value_name = "FILE")]
    emit_script: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Suite root: one directory per case.
    #[arg(long, value_name = "DIR")]
    suite: PathBuf,
    /// Trials per case [default: 5].
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads [default: 1].
    #[arg(long)]
    jobs: Option<usize>,
    /// Parent of the run directory [default: runs].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run directory name [default: current UTC timestamp].
    #[arg(long)]
    run_name: Option<String>,
    /// Count vacuous proofs as Func successes.
    #[arg(long)]
    allow_vacuous: bool,
    #[command(flatten)]
    agent: AgentArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

/// Values a `--config` file may supply. Flags take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    depth: Option<u32>,
    paths: Option<u64>,
    time_limit: Option<f64>,
    random_runs: Option<u32>,
    backend: Option<BackendKind>,
    backend_cmd: Option<String>,
    backend_dir: Option<PathBuf>,
    llm_replay: Option<PathBuf>,
    llm_url: Option<String>,
    llm_model: Option<String>,
    ablate: Option<Ablation>,
    phase_a_rounds: Option<usize>,
    phase_b_rounds: Option<usize>,
    sampling: Option<SamplingKind>,
    seed: Option<u64>,
    system_prompt: Option<PathBuf>,
    observation_cap: Option<usize>,
    embedder: Option<EmbedderKind>,
    trials: Option<usize>,
    jobs: Option<usize>,
    out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(p) = path else { return Ok(FileConfig::default()) };
    let text = std::fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))
}

fn budget(s: &SolverArgs, c: &FileConfig, seed: u64) -> Result<Budget, CliError> {
    let d = Budget::default();
    let secs = s.time_limit.or(c.time_limit).unwrap_or(d.wall_time.as_secs_f64());
    if !secs.is_finite() || secs <= 0.0 {
        return Err(usage("--time-limit must be a positive number of seconds"));
    }
    Ok(Budget {
        depth: s.depth.or(c.depth).unwrap_or(d.depth),
        paths: s.paths.or(c.paths).unwrap_or(d.paths),
        wall_time: Duration::from_secs_f64(secs),
        random_runs: s.random_runs.or(c.random_runs).unwrap_or(d.random_runs),
        seed,
        history_cap: d.history_cap,
    })
}

fn backend(s: &SolverArgs, c: &FileConfig) -> Result<Backend, CliError> {
    match s.backend.or(c.backend).unwrap_or(BackendKind::Builtin) {
        BackendKind::Builtin => Ok(Backend::Builtin),
        BackendKind::External => {
            let command = s.backend_cmd.clone().or_else(|| c.backend_cmd.clone()).ok_or_else(|| usage("--backend external requires --backend-cmd"))?;
            let work_dir = s.backend_dir.clone().or_else(|| c.backend_dir.clone()).unwrap_or_else(|| std::env::temp_dir().join("proofloop-jobs"));
            Ok(Backend::External { command, work_dir })
        }
    }
}

fn embedder(kind: Option<EmbedderKind>) -> Result<Box<dyn Embedder>, CliError> {
    match kind.unwrap_or(EmbedderKind::Trigram) {
        EmbedderKind::Trigram => Ok(Box::new(TrigramEmbedder::default())),
        EmbedderKind::Http => HttpEmbedder::from_env().map(|e| Box::new(e) as Box<dyn Embedder>).ok_or_else(|| usage("--embedder http requires PROOFLOOP_EMBED_URL")),
    }
}

fn agent_config(a: &AgentArgs, s: &SolverArgs, c: &FileConfig, multi_trial: bool) -> Result<AgentConfig, CliError> {
    let d = AgentConfig::default();
    let seed = a.seed.or(c.seed).unwrap_or(0);
    let sampling = match a.sampling.or(c.sampling) {
        Some(SamplingKind::Deterministic) => Sampling::DETERMINISTIC,
        Some(SamplingKind::Nucleus) => Sampling::NUCLEUS,
        None if multi_trial => Sampling::NUCLEUS,
        None => Sampling::DETERMINISTIC,
    };
    let system_prompt = match a.system_prompt.clone().or_else(|| c.system_prompt.clone()) {
        Some(p) => std::fs::read_to_string(&p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => d.system_prompt.clone(),
    };
    Ok(AgentConfig {
        phase_a_rounds: a.phase_a_rounds.or(c.phase_a_rounds).unwrap_or(d.phase_a_rounds),
        phase_b_rounds: a.phase_b_rounds.or(c.phase_b_rounds).unwrap_or(d.phase_b_rounds).max(1),
        observation_cap: a.observation_cap.or(c.observation_cap).unwrap_or(d.observation_cap),
        observation_budget: d.observation_budget,
        ablation: a.ablate.or(c.ablate).unwrap_or_default(),
        budget: budget(s, c, seed)?,
        sampling: Sampling { seed: Some(seed), ..sampling },
        system_prompt,
        backend: backend(s, c)?,
    })
}

/// Scripted xor live.
fn llm_source(a: &AgentArgs, c: &FileConfig) -> Result<LlmSource, CliError> {
    let replay = a.llm_replay.clone().or_else(|| c.llm_replay.clone());
    let url = a.llm_url.clone().or_else(|| c.llm_url.clone()).or_else(|| std::env::var("PROOFLOOP_LLM_URL").ok());
    if replay.is_some() && a.llm_url.is_some() {
        return Err(usage("--llm-replay and --llm-url are mutually exclusive"));
    }
    if let Some(file) = replay {
        return Ok(LlmSource::Replay { file: Some(file) });
    }
    match url {
        Some(url) => Ok(LlmSource::Live {
            url,
            api_key: std::env::var("PROOFLOOP_LLM_API_KEY").ok(),
            model: a.llm_model.clone().or_else(|| c.llm_model.clone()).or_else(|| std::env::var("PROOFLOOP_LLM_MODEL").ok()).unwrap_or_else(|| "default".into()),
        }),
        None => Ok(LlmSource::Replay { file: None }),
    }
}

fn load_design(d: &DesignArgs) -> Result<Design, CliError> {
    if !d.design.exists() {
        return Err(usage(format!("design path not found: {}", d.design.display())));
    }
    Design::load(&d.design, &d.top).map_err(usage)
}

fn build_kb(design: &Design, emb: &dyn Embedder) -> Result<KnowledgeBase, CliError> {
    let chunks = chunk_design(&design.unit);
    KnowledgeBase::build(design_id(&chunks), chunks, emb).map_err(|e| CliError::Failed(e.to_string()))
}

/// Reads an SVA file; a file without code fences is taken as one block.
pub fn read_sva(text: &str) -> Option<Vec<AssertionSrc>> {
    if text.contains("```") {
        extract_assertions(text)
    } else {
        extract_assertions(&format!("```\n{text}\n```"))
    }
}

/// Verdict table: one line per property, then diagnostics and traces.
pub fn verdict_table(r: &ProofResult) -> String {
    let mut s = String::new();
    if !r.compile_ok {
        s.push_str("compile: FAILED\n");
    }
    for d in &r.diagnostics {
        let _ = writeln!(s, "{d}");
    }
    let w = r.per_property.iter().map(|p| p.label.len()).max().unwrap_or(5).max(5);
    if !r.per_property.is_empty() {
        let _ = writeln!(s, "{:<w$}  {:<12}  {:<11}  message", "label", "status", "vacuity");
    }
    for p in &r.per_property {
        let vac = match p.vacuous {
            Some(true) => "vacuous",
            Some(false) => "non_vacuous",
            None => "-",
        };
        let _ = writeln!(s, "{:<w$}  {:<12}  {:<11}  {}", p.label, p.status.as_str(), vac, p.message);
        if let Some(t) = &p.counterexample {
            for l in trace_table(t).lines() {
                let _ = writeln!(s, "    {l}");
            }
        }
    }
    s
}

fn cmd_index(a: &IndexArgs, c: &FileConfig) -> Result<(), CliError> {
    let design = load_design(&a.design)?;
    let emb = embedder(a.embedder.or(c.embedder))?;
    let kb = build_kb(&design, emb.as_ref())?;
    let out = a.out.clone().or_else(|| c.out.clone()).unwrap_or_else(|| PathBuf::from("index"));
    std::fs::create_dir_all(&out).map_err(|e| CliError::Failed(format!("{}: {e}", out.display())))?;
    kb.save(&out.join("kb.jsonl")).map_err(|e| CliError::Failed(e.to_string()))?;
    let graph = serde_json::to_string_pretty(&design.graph).map_err(|e| CliError::Failed(e.to_string()))?;
    std::fs::write(out.join("graph.json"), graph + "\n").map_err(|e| CliError::Failed(e.to_string()))?;
    println!("indexed {} chunks, {} signals, {} flops -> {}", kb.len(), design.graph.nodes.len(), design.graph.flops.len(), out.display());
    Ok(())
}

fn cmd_generate(a: &GenerateArgs, c: &FileConfig) -> Result<(), CliError> {
    let design = load_design(&a.design)?;
    let spec = std::fs::read_to_string(&a.spec).map_err(|e| usage(format!("{}: {e}", a.spec.display())))?;
    let cfg = agent_config(&a.agent, &a.solver, c, false)?;
    let emb = embedder(a.agent.embedder.or(c.embedder))?;
    let kb = build_kb(&design, emb.as_ref())?;
    let mut model: Box<dyn ChatModel> = match llm_source(&a.agent, c)? {
        LlmSource::Replay { file: Some(f) } => Box::new(ScriptedModel::load(&f).map_err(usage)?),
        LlmSource::Replay { file: None } => return Err(usage("no model configured: pass --llm-replay or --llm-url (or set PROOFLOOP_LLM_URL)")),
        LlmSource::Live { url, api_key, model } => Box::new(HttpChatModel::new(&url, api_key, &model)),
    };
    let ctx = ToolContext { design: &design, kb: &kb, embedder: emb.as_ref() };
    let r = run_agent(&spec, &design, &ctx, model.as_mut(), &cfg);
    let seed = cfg.budget.seed;
    let report = bench::CaseReport::from_result(&design.top, 0, seed, cfg.ablation, &r, true);
    let mut out = String::new();
    let _ = writeln!(out, "phase A rounds: {}, tool calls: {}, phase B rounds: {}", r.rounds_used_phase_a, r.tool_call_log.len(), r.rounds_used_phase_b);
    let _ = writeln!(out, "termination: {}", r.termination_reason);
    if let (Some(cand), Some(proof)) = (&r.candidate, &r.proof) {
        let _ = writeln!(out, "\n{}", render_bind_file(&cand.bind_target, &cand.assertions));
        out.push_str(&verdict_table(proof));
    }
    print!("{out}");
    if let Some(dir) = &a.out {
        let t = TrialOutput { report, agent: Some(r.clone()), elapsed_ms: 0 };
        bench::write_trial_at(dir, &t).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    if r.candidate.is_none() {
        return Err(CliError::Failed(format!("no candidate produced: {}", r.termination_reason)));
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs, c: &FileConfig) -> Result<bool, CliError> {
    let design = load_design(&a.design)?;
    let text = std::fs::read_to_string(&a.sva).map_err(|e| usage(format!("{}: {e}", a.sva.display())))?;
    let assertions = read_sva(&text).ok_or_else(|| usage(format!("{}: no `assert property` statements found", a.sva.display())))?;
    let budget = budget(&a.solver, c, 0)?;
    if let Some(p) = &a.emit_script {
        let job = emit_external_job(&design, &assertions, &budget);
        std::fs::write(p, &job.script).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
        return Ok(true);
    }
    let r = verify(&backend(&a.solver, c)?, &design, &assertions, &budget).map_err(CliError::Failed)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&r).map_err(|e| CliError::Failed(e.to_string()))?);
    } else {
        print!("{}", verdict_table(&r));
    }
    Ok(r.compile_ok && r.per_property.iter().all(|p| p.status != Status::Falsified))
}

fn cmd_bench(a: &BenchArgs, c: &FileConfig) -> Result<(), CliError> {
    let suite = bench::load_cases(&a.suite).map_err(usage)?;
    for s in &suite.skipped {
        eprintln!("skipped {}: {}", s.dir, s.reason);
    }
    let trials = a.trials.or(c.trials).unwrap_or(5);
    if trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let agent = agent_config(&a.agent, &a.solver, c, trials > 1)?;
    let cfg = BenchConfig {
        trials,
        jobs: a.jobs.or(c.jobs).unwrap_or(1),
        base_seed: agent.budget.seed,
        agent,
        llm: llm_source(&a.agent, c)?,
        func_requires_non_vacuous: !a.allow_vacuous,
    };
    let emb = embedder(a.agent.embedder.or(c.embedder))?;
    let name = a.run_name.clone().unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
    let dir = a.out.clone().or_else(|| c.out.clone()).unwrap_or_else(|| PathBuf::from("runs")).join(name);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Failed(format!("{}: {e}", dir.display())))?;
    let outputs = bench::run_trials(&suite.cases, &cfg, emb.as_ref(), Some(&dir));
    let reports: Vec<_> = outputs.iter().map(|o| o.report.clone()).collect();
    let run = bench::run_summary(&reports, cfg.agent.ablation, trials, &suite.skipped).map_err(|e| CliError::Failed(e.to_string()))?;
    bench::write_run(&dir, &outputs, &run).map_err(|e| CliError::Failed(e.to_string()))?;
    let m = &run.summary;
    println!(
        "{} reports ({} failed) | syntax {:.1}% | functionality {:.1}% | proven {} falsified {} undetermined {} | run dir {}",
        m.reports,
        run.failed_trials,
        m.syntax,
        m.functionality,
        m.proven,
        m.falsified,
        m.undetermined,
        dir.display()
    );
    Ok(())
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 when
/// `verify` finds a failing assertion (or a run fails), 2 on usage errors.
pub fn main<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = load_config(cli.config.as_deref()).and_then(|c| match &cli.command {
        Command::Index(a) => cmd_index(a, &c).map(|_| true),
        Command::Generate(a) => cmd_generate(a, &c).map(|_| true),
        Command::Verify(a) => cmd_verify(a, &c),
        Command::Bench(a) => cmd_bench(a, &c).map(|_| true),
    });
    let _ = std::io::stdout().flush();
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}\n\nFor more information, try '--help'.");
            2
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}
