//! The two-phase agent: tool-driven context gathering, then assertion
//! generation with checker-driven repair.

pub mod conversation;
pub mod extract;
pub mod llm;
pub mod tools;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use conversation::{Conversation, ConversationError, Message, Role, ToolCall};
pub use extract::extract_assertions;
pub use llm::{ChatModel, ChatRequest, HttpChatModel, LlmError, Phase, Sampling, ScriptEntry, ScriptedModel};
pub use tools::{dispatch_tool, schemas, tool_category, ObsStatus, Observation, ToolCategory, ToolContext, ToolSchema};

use crate::design::Design;
use crate::rtl::hierarchy_tree;
use crate::solver::{render_bind_file, trace_table, verify, AssertionSrc, Backend, Budget, ProofResult, Status, BIND_FILE};

pub const PHASE_A_ROUNDS: usize = 6;
pub const PHASE_B_ROUNDS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    NoRag,
    NoStructural,
    NoVerifyLoop,
    /// All tools off: no Phase A, raw RTL as context, one generation round.
    Baseline,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::None, Ablation::NoRag, Ablation::NoStructural, Ablation::NoVerifyLoop, Ablation::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoRag => "no-rag",
            Ablation::NoStructural => "no-structural",
            Ablation::NoVerifyLoop => "no-verify-loop",
            Ablation::Baseline => "baseline",
        }
    }

    pub fn tool_categories(self) -> Vec<ToolCategory> {
        match self {
            Ablation::NoRag => vec![ToolCategory::Structural],
            Ablation::NoStructural => vec![ToolCategory::Retrieval],
            Ablation::Baseline => Vec::new(),
            Ablation::None | Ablation::NoVerifyLoop => vec![ToolCategory::Retrieval, ToolCategory::Structural],
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ablation::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| {
            format!("unknown ablation '{s}'; expected one of: {}", Ablation::ALL.map(Ablation::name).join(", "))
        })
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a formal verification engineer writing SystemVerilog Assertions for an RTL design.

Work in two steps. First, gather the design facts you need by calling the available tools: search the design, read module interfaces, the hierarchy and parameters, look up the always blocks that drive a signal, and ask for signal cones and register clock/reset details. Call tools until you are confident about signal names, widths, clocks, resets and timing; then reply without tool calls.

When asked for assertions, answer with one fenced code block containing one assertion per line in the form
  label: assert property (@(posedge clk) disable iff (<reset active>) antecedent |-> consequent);
Supported temporal operators: |->, |=>, ##n, ##[m:n], $past(e[, n]), $rose, $fell, $stable, $onehot, $onehot0, $countones. Assertions are bound to the top module; refer to signals inside instances with dotted paths such as u_ctrl.state. Unpacked array elements must be referenced one element at a time.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub phase_a_rounds: usize,
    pub phase_b_rounds: usize,
    pub observation_cap: usize,
    pub observation_budget: usize,
    pub ablation: Ablation,
    pub budget: Budget,
    pub sampling: Sampling,
    pub system_prompt: String,
    pub backend: Backend,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            phase_a_rounds: PHASE_A_ROUNDS,
            phase_b_rounds: PHASE_B_ROUNDS,
            observation_cap: conversation::DEFAULT_OBSERVATION_CAP,
            observation_budget: conversation::DEFAULT_OBSERVATION_BUDGET,
            ablation: Ablation::None,
            budget: Budget::default(),
            sampling: Sampling::DETERMINISTIC,
            system_prompt: DEFAULT_SYSTEM_PROMPT.to_string(),
            backend: Backend::Builtin,
        }
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Conversation(#[from] ConversationError),
    #[error("no assertions could be extracted from the model's reply (after one re-ask)")]
    Extraction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvaCandidate {
    pub assertions: Vec<AssertionSrc>,
    pub bind_target: String,
    pub raw_llm_text: String,
    pub round_index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolLogEntry {
    pub round: usize,
    pub call: ToolCall,
    pub observation: Observation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub candidate: SvaCandidate,
    pub result: ProofResult,
    /// Labels whose proven text was restored after the model edited it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub restored: Vec<String>,
}

impl RoundRecord {
    /// `(proven, failed)`; a round that does not compile counts every
    /// assertion as failed.
    pub fn score(&self) -> (usize, usize) {
        if self.result.compile_ok {
            (self.result.count(Status::Proven), self.result.count(Status::Falsified))
        } else {
            (0, self.candidate.assertions.len().max(1))
        }
    }
}

/// Index of the best round: most proven, then fewest failed, then earliest.
pub fn best_round(rounds: &[RoundRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in rounds.iter().enumerate() {
        let (p, f) = r.score();
        match best {
            Some(b) => {
                let (bp, bf) = rounds[b].score();
                if p > bp || (p == bp && f < bf) {
                    best = Some(i);
                }
            }
            None => best = Some(i),
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentResult {
    pub candidate: Option<SvaCandidate>,
    pub proof: Option<ProofResult>,
    pub rounds_used_phase_a: usize,
    pub rounds_used_phase_b: usize,
    pub tool_call_log: Vec<ToolLogEntry>,
    /// Calls to tools not offered under the active ablation (answered with
    /// an error, not logged above).
    pub rejected_tool_calls: usize,
    pub rounds: Vec<RoundRecord>,
    pub best_round: Option<usize>,
    pub termination_reason: String,
    pub conversation: Conversation,
}

/// Top module interface plus the hierarchy summary.
pub fn design_context_header(design: &Design) -> String {
    let iface = design.unit.module(&design.top).map(|m| m.header()).unwrap_or_default();
    let tree = hierarchy_tree(&design.unit, &design.top).map(|t| t.summary()).unwrap_or_default();
    format!("Top module interface:\n{iface}\n\nHierarchy:\n{tree}")
}

fn raw_rtl(design: &Design) -> String {
    let mut s = String::new();
    for (name, text) in &design.files {
        let _ = writeln!(s, "// file: {name}\n{text}");
    }
    s
}

/// Phase A: lets the model call tools for up to `max_rounds` assistant turns.
/// Returns the number of rounds used.
#[allow(clippy::too_many_arguments)]
pub fn run_phase_a(
    conv: &mut Conversation,
    llm: &mut dyn ChatModel,
    ctx: &ToolContext<'_>,
    advertised: &[ToolSchema],
    max_rounds: usize,
    sampling: Sampling,
    log: &mut Vec<ToolLogEntry>,
    rejected: &mut usize,
) -> Result<usize, AgentError> {
    let mut rounds = 0;
    while rounds < max_rounds {
        let msg = llm.chat(&ChatRequest { messages: &conv.messages, tools: advertised, sampling, phase: Phase::Gather })?;
        rounds += 1;
        let calls = msg.tool_calls.clone();
        conv.push(msg)?;
        if calls.is_empty() {
            break;
        }
        for call in calls {
            let obs = if advertised.iter().any(|t| t.name == call.name) {
                let o = dispatch_tool(&call.name, &call.id, &call.arguments, ctx);
                log.push(ToolLogEntry { round: rounds, call: call.clone(), observation: o.clone() });
                o
            } else {
                *rejected += 1;
                Observation::error(&call.id, "unknown_tool", format!("tool '{}' is not available in this session", call.name))
            };
            conv.push_observation(&call.id, &obs.render())?;
        }
    }
    Ok(rounds)
}

const GENERATE_PROMPT: &str = "Now write the assertions for the specification. Reply with one fenced code block, one labeled assertion per line.";
const REASK_PROMPT: &str = "I could not find any assertion in a fenced code block in your reply. Reply again with one fenced code block containing lines of the form `label: assert property (...);`.";

fn ask_for_assertions(conv: &mut Conversation, llm: &mut dyn ChatModel, phase: Phase, sampling: Sampling, prompt: String) -> Result<(Vec<AssertionSrc>, String), AgentError> {
    conv.push(Message::user(prompt))?;
    for attempt in 0..2 {
        let mut msg = llm.chat(&ChatRequest { messages: &conv.messages, tools: &[], sampling, phase })?;
        // No tools are offered here; stray calls are dropped.
        msg.tool_calls.clear();
        let text = msg.content.clone();
        conv.push(msg)?;
        if let Some(a) = extract_assertions(&text) {
            return Ok((a, text));
        }
        if attempt == 0 {
            conv.push(Message::user(REASK_PROMPT))?;
        }
    }
    Err(AgentError::Extraction)
}

/// Asks for a candidate after Phase A.
pub fn generate_candidate(conv: &mut Conversation, llm: &mut dyn ChatModel, top: &str, sampling: Sampling) -> Result<SvaCandidate, AgentError> {
    let (assertions, raw) = ask_for_assertions(conv, llm, Phase::Generate, sampling, GENERATE_PROMPT.to_string())?;
    Ok(SvaCandidate { assertions, bind_target: top.to_string(), raw_llm_text: raw, round_index: 1 })
}

/// The repair request for a round that was not fully proven.
pub fn build_repair_prompt(candidate: &SvaCandidate, result: &ProofResult) -> Message {
    let bind = render_bind_file(&candidate.bind_target, &candidate.assertions);
    let bind_lines: Vec<&str> = bind.lines().collect();
    let line_of = |a: &AssertionSrc| bind_lines.iter().find(|l| l.starts_with(&format!("{}: ", a.label))).copied().unwrap_or_default().to_string();
    let mut s = String::from("The formal checker reported problems with your assertions.\n\n");
    let mut keep = Vec::new();
    if !result.compile_ok {
        s.push_str("Compilation failed:\n");
        for d in result.diagnostics.iter().filter(|d| d.is_error()) {
            let _ = writeln!(s, "- {d}");
            if d.file == BIND_FILE && d.line >= 1 {
                if let Some(l) = bind_lines.get(d.line as usize - 1) {
                    let _ = writeln!(s, "  offending line {}: {l}", d.line);
                }
            }
        }
        s.push('\n');
    } else {
        for a in &candidate.assertions {
            let Some(p) = result.get(&a.label) else { continue };
            match p.status {
                Status::Proven => keep.push(line_of(a)),
                Status::Falsified => {
                    let _ = writeln!(s, "Assertion `{}` is FALSIFIED: {}", a.label, p.message);
                    let _ = writeln!(s, "  {}", line_of(a));
                    if let Some(t) = &p.counterexample {
                        let _ = writeln!(s, "Counterexample (values per cycle after reset, * marks the failing cycle):\n{}", trace_table(t));
                    }
                }
                Status::Undetermined => {
                    let _ = writeln!(s, "Assertion `{}` is UNDETERMINED: {}\n  {}\n", a.label, p.message, line_of(a));
                }
            }
        }
    }
    if !keep.is_empty() {
        s.push_str("These assertions were proven; copy them unchanged:\n");
        for k in &keep {
            let _ = writeln!(s, "  {k}");
        }
        s.push('\n');
    }
    s.push_str("Edit only the failing assertions, keep every passing assertion verbatim, and reply with the complete corrected set in one fenced code block.");
    Message::user(s)
}

/// Puts back the text of assertions proven in the previous round if the
/// model changed or dropped them. Returns the restored labels.
fn restore_proven(prev: &RoundRecord, next: &mut SvaCandidate) -> Vec<String> {
    let mut restored = Vec::new();
    if !prev.result.compile_ok {
        return restored;
    }
    for a in &prev.candidate.assertions {
        if prev.result.get(&a.label).map(|p| p.status) != Some(Status::Proven) {
            continue;
        }
        match next.assertions.iter_mut().find(|n| n.label == a.label) {
            Some(n) if n.property != a.property => {
                n.property = a.property.clone();
                restored.push(a.label.clone());
            }
            Some(_) => {}
            None => {
                next.assertions.push(a.clone());
                restored.push(a.label.clone());
            }
        }
    }
    restored
}

fn solve(design: &Design, candidate: &SvaCandidate, cfg: &AgentConfig) -> ProofResult {
    match verify(&cfg.backend, design, &candidate.assertions, &cfg.budget) {
        Ok(r) => r,
        Err(e) => ProofResult {
            compile_ok: true,
            diagnostics: Vec::new(),
            per_property: candidate
                .assertions
                .iter()
                .map(|a| crate::solver::PropertyResult {
                    label: a.label.clone(),
                    status: Status::Undetermined,
                    vacuous: None,
                    counterexample: None,
                    message: format!("solver error: {e}"),
                })
                .collect(),
            bound_reached: 0,
        },
    }
}

fn accepted(r: &ProofResult) -> bool {
    r.compile_ok && r.per_property.iter().all(|p| p.status != Status::Falsified)
}

/// Phase B: check, and repair until accepted or the round cap. Returns the
/// round records and the termination reason.
pub fn run_phase_b(
    conv: &mut Conversation,
    mut candidate: SvaCandidate,
    design: &Design,
    llm: &mut dyn ChatModel,
    cfg: &AgentConfig,
    max_rounds: usize,
) -> (Vec<RoundRecord>, String) {
    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut restored = Vec::new();
    for round in 1..=max_rounds.max(1) {
        candidate.round_index = round;
        let result = solve(design, &candidate, cfg);
        let ok = accepted(&result);
        rounds.push(RoundRecord { round, candidate: candidate.clone(), result, restored: std::mem::take(&mut restored) });
        if ok {
            return (rounds, "all assertions proven or undetermined".into());
        }
        if round == max_rounds {
            break;
        }
        let last = rounds.last().expect("just pushed");
        let prompt = build_repair_prompt(&last.candidate, &last.result).content;
        match ask_for_assertions(conv, llm, Phase::Repair, cfg.sampling, prompt) {
            Ok((assertions, raw)) => {
                let mut next = SvaCandidate { assertions, bind_target: candidate.bind_target.clone(), raw_llm_text: raw, round_index: round + 1 };
                restored = restore_proven(last, &mut next);
                candidate = next;
            }
            Err(e) => return (rounds, format!("repair stopped: {e}")),
        }
    }
    (rounds, "verification round cap reached".into())
}

/// Runs both phases for one specification.
pub fn run_agent(spec: &str, design: &Design, ctx: &ToolContext<'_>, llm: &mut dyn ChatModel, cfg: &AgentConfig) -> AgentResult {
    let mut conv = Conversation::new(cfg.observation_budget, cfg.observation_cap);
    let mut log = Vec::new();
    let mut rejected = 0;
    let mut result = AgentResult {
        candidate: None,
        proof: None,
        rounds_used_phase_a: 0,
        rounds_used_phase_b: 0,
        tool_call_log: Vec::new(),
        rejected_tool_calls: 0,
        rounds: Vec::new(),
        best_round: None,
        termination_reason: String::new(),
        conversation: Conversation::new(0, 0),
    };
    let context = if cfg.ablation == Ablation::Baseline { format!("Design RTL:\n{}", raw_rtl(design)) } else { design_context_header(design) };
    conv.push(Message::system(cfg.system_prompt.clone())).expect("first message");
    conv.push(Message::user(format!("Specification:\n{}\n\n{context}", spec.trim_end()))).expect("after system");

    let mut phase_a_note = None;
    if cfg.ablation != Ablation::Baseline {
        let advertised = schemas(&cfg.ablation.tool_categories());
        match run_phase_a(&mut conv, llm, ctx, &advertised, cfg.phase_a_rounds, cfg.sampling, &mut log, &mut rejected) {
            Ok(n) => result.rounds_used_phase_a = n,
            Err(e) => {
                result.rounds_used_phase_a = conv.messages.iter().filter(|m| m.role == Role::Assistant).count();
                phase_a_note = Some(format!("phase A stopped: {e}"));
            }
        }
    }
    result.tool_call_log = log;
    result.rejected_tool_calls = rejected;

    let finish = |mut result: AgentResult, conv: Conversation, reason: String| {
        result.termination_reason = reason;
        result.conversation = conv;
        result
    };
    // A pending-call state can only arise from an aborted phase A; it is
    // never left behind by run_phase_a itself.
    if !conv.pending_calls().is_empty() {
        return finish(result, conv, phase_a_note.unwrap_or_else(|| "unanswered tool calls".into()));
    }
    let candidate = match generate_candidate(&mut conv, llm, &design.top, cfg.sampling) {
        Ok(c) => c,
        Err(e) => {
            let reason = match phase_a_note {
                Some(n) => format!("{n}; generation failed: {e}"),
                None => format!("generation failed: {e}"),
            };
            return finish(result, conv, reason);
        }
    };
    let max_b = if matches!(cfg.ablation, Ablation::NoVerifyLoop | Ablation::Baseline) { 1 } else { cfg.phase_b_rounds };
    let (rounds, reason) = run_phase_b(&mut conv, candidate, design, llm, cfg, max_b);
    let early = reason.starts_with("all assertions");
    let best = if early { Some(rounds.len() - 1) } else { best_round(&rounds) };
    result.rounds_used_phase_b = rounds.len();
    result.best_round = best;
    if let Some(b) = best {
        result.candidate = Some(rounds[b].candidate.clone());
        result.proof = Some(rounds[b].result.clone());
    }
    result.rounds = rounds;
    finish(result, conv, reason)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PropertyResult;

    fn round(labels: &[(&str, Status)], compile_ok: bool) -> RoundRecord {
        let assertions = labels.iter().map(|(l, _)| AssertionSrc::new(*l, format!("@(posedge clk) {l}"))).collect();
        let per_property = if compile_ok {
            labels.iter().map(|(l, s)| PropertyResult { label: l.to_string(), status: *s, vacuous: None, counterexample: None, message: String::new() }).collect()
        } else {
            Vec::new()
        };
        RoundRecord {
            round: 0,
            candidate: SvaCandidate { assertions, bind_target: "t".into(), raw_llm_text: String::new(), round_index: 0 },
            result: ProofResult { compile_ok, diagnostics: Vec::new(), per_property, bound_reached: 0 },
            restored: Vec::new(),
        }
    }

    #[test]
    fn best_round_ordering() {
        use Status::*;
        let rs = [
            round(&[("a", Proven), ("b", Falsified)], true),
            round(&[("a", Proven), ("b", Undetermined)], true),
            round(&[("a", Proven), ("b", Undetermined)], true),
            round(&[("a", Proven)], false),
        ];
        assert_eq!(best_round(&rs), Some(1));
        assert_eq!(best_round(&rs[3..]), Some(0));
        assert_eq!(best_round(&[]), None);
        assert_eq!(rs[3].score(), (0, 1));
    }

    #[test]
    fn proven_text_is_restored() {
        let prev = round(&[("a", Status::Proven), ("b", Status::Falsified)], true);
        let mut next = SvaCandidate { assertions: vec![AssertionSrc::new("b", "@(posedge clk) c"), AssertionSrc::new("a", "changed")], ..prev.candidate.clone() };
        assert_eq!(restore_proven(&prev, &mut next), ["a"]);
        assert_eq!(next.assertions[1].property, "@(posedge clk) a");
        let mut dropped = SvaCandidate { assertions: vec![AssertionSrc::new("b", "x")], ..prev.candidate.clone() };
        assert_eq!(restore_proven(&prev, &mut dropped), ["a"]);
        assert_eq!(dropped.assertions.len(), 2);
    }

    #[test]
    fn ablation_tool_sets() {
        assert!(Ablation::Baseline.tool_categories().is_empty());
        assert_eq!(Ablation::NoRag.tool_categories(), [ToolCategory::Structural]);
        assert_eq!(Ablation::NoStructural.tool_categories(), [ToolCategory::Retrieval]);
        assert!("no-such".parse::<Ablation>().is_err());
    }
}
