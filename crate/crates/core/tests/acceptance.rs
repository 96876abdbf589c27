//! Acceptance run: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proofloop::agent::{
    run_agent, tool_category, Ablation, AgentConfig, AgentResult, ChatModel, ChatRequest, LlmError, Message, ScriptEntry, ScriptedModel, ToolCategory,
    ToolContext,
};
use proofloop::agent::llm::ScriptCall;
use proofloop::bench::{self, aggregate_metrics, func_at_k, BenchConfig, CaseReport, LlmSource};
use proofloop::diag::{Diagnostic, Severity};
use proofloop::elab::SignalKind;
use proofloop::kb::{Entry, KnowledgeBase, TrigramEmbedder, Embedding};
use proofloop::rtl::ast::Edge;
use proofloop::rtl::chunk::{Chunk, ChunkKind};
use proofloop::rtl::chunk_design;
use proofloop::solver::external::{parse_external_log, render_log};
use proofloop::solver::{
    compile_monitor, parse_assertions, prove, replay_trace, vacuity_check, AssertionSrc, Budget, ProofResult, PropertyResult, Status, Trace as CexTrace, Vacuity,
};
use proofloop::structure::{ConeDirection, DepEdge, DesignGraph, Polarity, ResetKind, SignalNode};
use proofloop::Design;

use common::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 -------------------------------------------------------------------------

fn case_study_run() -> (AgentResult, String) {
    let dir = corpus_dir().join("fsm_exec_units");
    let suite = bench::load_cases(&corpus_dir()).expect("corpus loads");
    let case = suite.cases.iter().find(|c| c.case_id == "fsm_exec_units").expect("case-study case");
    let emb = TrigramEmbedder::default();
    let chunks = chunk_design(&case.design.unit);
    let kb = KnowledgeBase::build(proofloop::kb::design_id(&chunks), chunks, &emb).unwrap();
    let ctx = ToolContext { design: &case.design, kb: &kb, embedder: &emb };
    let mut model = ScriptedModel::load(&dir.join("trajectory.jsonl")).unwrap();
    let r = run_agent(&case.spec, &case.design, &ctx, &mut model, &AgentConfig::default());
    let out = tempfile::tempdir().unwrap();
    let t = bench::TrialOutput { report: CaseReport::from_result("fsm_exec_units", 0, 0, Ablation::None, &r, true), agent: Some(r.clone()), elapsed_ms: 0 };
    bench::write_trial_at(out.path(), &t).unwrap();
    let mut bytes = String::new();
    let mut files: Vec<_> = walk(out.path());
    files.sort();
    for f in files {
        bytes.push_str(&format!("== {}\n{}", f.strip_prefix(out.path()).unwrap().display(), std::fs::read_to_string(&f).unwrap()));
    }
    (r, bytes)
}

fn walk(p: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(p).unwrap() {
        let e = e.unwrap().path();
        if e.is_dir() {
            out.extend(walk(&e));
        } else {
            out.push(e);
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (a, bytes_a) = case_study_run();
    let (_, bytes_b) = case_study_run();
    let elapsed = start.elapsed();
    ensure(a.tool_call_log.len() >= 20, || format!("only {} tool calls", a.tool_call_log.len()))?;
    ensure(a.rounds_used_phase_a <= 6, || format!("{} phase A rounds", a.rounds_used_phase_a))?;
    ensure(a.rounds.len() >= 2, || format!("{} phase B rounds", a.rounds.len()))?;
    let r1 = &a.rounds[0].result;
    ensure(!r1.compile_ok, || "round 1 compiled".into())?;
    ensure(r1.diagnostics.iter().any(|d| d.message.contains("part-select of unpacked array 'ready'")), || format!("round 1 diagnostics: {:?}", r1.diagnostics))?;
    let r2 = &a.rounds[1].result;
    let (p, f) = (r2.count(Status::Proven), r2.count(Status::Falsified));
    ensure(r2.compile_ok && p == 5 && f == 0, || format!("round 2: compile_ok={} proven={p} falsified={f}", r2.compile_ok))?;
    ensure(bytes_a == bytes_b, || "artifacts differ between executions".into())?;
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} tool calls in {} phase A rounds; round 1 compile error on the array slice; round 2 {p} proven / {f} falsified; byte-identical; {:.2}s for two runs",
        a.tool_call_log.len(),
        a.rounds_used_phase_a,
        elapsed.as_secs_f64()
    ))
}

// 2 -------------------------------------------------------------------------

const COUNTER: &str = "module counter_wrap(input logic clk, input logic rst, input logic en, output logic [2:0] count, output logic wrap);
  always_ff @(posedge clk) begin
    if (rst) count <= 3'd0;
    else if (en) count <= count + 3'd1;
  end
  assign wrap = en && count == 3'd7;
endmodule
";

/// (case or inline design, top, property, depth)
fn conformance_pairs() -> Vec<(Design, &'static str, usize)> {
    let toggle = design(TOGGLE, "toggle");
    let counter = design(COUNTER, "counter_wrap");
    let hs = corpus_design("handshake_fsm");
    let pipe = corpus_design("pipe2_valid");
    let traffic = corpus_design("traffic_light");
    let arb = corpus_design("rr_arbiter");
    let mut v = Vec::new();
    for p in [
        "@(posedge clk) disable iff (rst) q |=> !q",
        "@(posedge clk) q |-> ##1 q",
        "@(posedge clk) !q |=> q",
        "@(posedge clk) disable iff (rst) $rose(q) |=> $fell(q)",
    ] {
        v.push((toggle.clone(), p, 12));
    }
    for p in [
        "@(posedge clk) disable iff (rst) en |=> count == $past(count) + 3'd1",
        "@(posedge clk) en |=> count == $past(count) + 3'd1",
        "@(posedge clk) wrap |-> count == 3'd7",
        "@(posedge clk) count == 3'd7 |-> wrap",
        "@(posedge clk) disable iff (rst) !en |=> $stable(count)",
        "@(posedge clk) count != 3'd5",
    ] {
        v.push((counter.clone(), p, 8));
    }
    for p in [
        "@(posedge clk) disable iff (!rst_n) busy |=> ack",
        "@(posedge clk) state != 2'd3",
        "@(posedge clk) disable iff (!rst_n) req |=> ack",
        "@(posedge clk) disable iff (!rst_n) state == 2'd0 && req |-> ##[1:2] ack",
        "@(posedge clk) disable iff (!rst_n) ack |-> ##[1:2] !ack",
    ] {
        v.push((hs.clone(), p, 8));
    }
    for p in [
        "@(posedge clk) disable iff (!rst_n) in_v |-> ##2 out_v",
        "@(posedge clk) in_v |-> ##2 out_v",
        "@(posedge clk) disable iff (!rst_n) in_v |-> ##2 out_d == $past(in_d, 2)",
        "@(posedge clk) disable iff (!rst_n) in_v |-> ##1 out_v",
    ] {
        v.push((pipe.clone(), p, 4));
    }
    for p in [
        "@(posedge clk) $onehot({red, yellow, green})",
        "@(posedge clk) disable iff (!rst_n) green && tick |=> yellow",
        "@(posedge clk) disable iff (!rst_n) red && tick |=> green",
        "@(posedge clk) disable iff (!rst_n) red ##1 red |-> ##1 green",
    ] {
        v.push((traffic.clone(), p, 8));
    }
    for p in [
        "@(posedge clk) $onehot0(gnt)",
        "@(posedge clk) (gnt & ~req) == 2'b00",
        "@(posedge clk) req != 2'b00 |-> gnt != 2'b00",
        "@(posedge clk) req == 2'b11 |-> gnt == 2'b01",
    ] {
        v.push((arb.clone(), p, 6));
    }
    v
}

fn criterion_2() -> Outcome {
    let pairs = conformance_pairs();
    let (mut proven, mut falsified) = (0, 0);
    for (d, prop, depth) in &pairs {
        let (oracle, _) = enumerate(d, prop, *depth);
        let budget = Budget { depth: *depth as u32, ..Budget::default() };
        let a = AssertionSrc::new("p", *prop);
        let r = prove(d, std::slice::from_ref(&a), &budget);
        ensure(r.compile_ok, || format!("{prop}: does not compile: {:?}", r.diagnostics))?;
        let pr = &r.per_property[0];
        match oracle {
            Some(v) => {
                ensure(pr.status == Status::Falsified, || format!("{}: {prop}: oracle violation at cycle {v}, checker says {:?}", d.top, pr.status))?;
                let t = pr.counterexample.as_ref().expect("falsified carries a trace");
                ensure(t.violating_cycle == v, || format!("{prop}: trace violates at {} but minimal is {v}", t.violating_cycle))?;
                let decl = parse_assertions("p.sv", &format!("p: assert property ({prop});")).0.remove(0);
                let m = compile_monitor(&d.flat, &decl, 16).unwrap();
                ensure(replay_trace(d, &m, t) == Some(t.violating_cycle), || format!("{prop}: trace does not replay"))?;
                falsified += 1;
            }
            None => {
                ensure(pr.status == Status::Proven, || format!("{}: {prop}: oracle finds no violation to depth {depth}, checker says {:?}: {}", d.top, pr.status, pr.message))?;
                proven += 1;
            }
        }
    }
    ensure(pairs.len() >= 20, || format!("only {} pairs", pairs.len()))?;
    Ok(format!("{} pairs agree with the exhaustive enumerator ({proven} proven, {falsified} falsified, all traces replay)", pairs.len()))
}

// 3 -------------------------------------------------------------------------

fn criterion_3() -> Outcome {
    let toggle = design(TOGGLE, "toggle");
    let traffic = corpus_design("traffic_light");
    let b = Budget { depth: 16, ..Budget::default() };
    let f = vacuity_check(&toggle, &AssertionSrc::new("f", "@(posedge clk) 1'b0 |-> q"), &b);
    let t = vacuity_check(&toggle, &AssertionSrc::new("t", "@(posedge clk) 1'b1 |-> 1'b1"), &b);
    let reach = reachable_values(&traffic, "light");
    ensure(!reach.contains(&3), || format!("oracle: light state 3 is reachable: {reach:?}"))?;
    let u = vacuity_check(&traffic, &AssertionSrc::new("u", "@(posedge clk) light == 2'd3 |-> red"), &b);
    ensure(f == Vacuity::Vacuous, || format!("false antecedent: {f:?}"))?;
    ensure(t == Vacuity::NonVacuous, || format!("true antecedent: {t:?}"))?;
    ensure(u == Vacuity::Vacuous, || format!("unreachable state: {u:?}"))?;
    Ok(format!("false antecedent vacuous, true antecedent non_vacuous, unreachable FSM state (reachable set {reach:?}) vacuous"))
}

// 4 -------------------------------------------------------------------------

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut queries = 0;
    for g in 0..100 {
        let n = rng.gen_range(2..30);
        let nodes: Vec<SignalNode> = (0..n).map(|i| SignalNode { name: format!("s{i:02}"), path: format!("s{i:02}"), width: 1, kind: SignalKind::Wire }).collect();
        let m = rng.gen_range(0..n * 3);
        let edges: Vec<(usize, usize)> = (0..m).map(|_| (rng.gen_range(0..n), rng.gen_range(0..n))).collect();
        let graph = DesignGraph::from_parts(
            "g".into(),
            nodes,
            edges.iter().map(|&(a, b)| DepEdge { driver: a, driven: b, origin: proofloop::elab::Origin::Assign }).collect(),
        );
        let rev: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (b, a)).collect();
        for seed in 0..n {
            for depth in [None, Some(1), Some(2), Some(rng.gen_range(1..6))] {
                for (dir, es) in [(ConeDirection::Fanout, &edges), (ConeDirection::Fanin, &rev)] {
                    let got = graph.cone(&format!("s{seed:02}"), dir, depth).unwrap();
                    let want: Vec<String> = brute_cone(n, es, seed, depth).into_iter().map(|i| format!("s{i:02}")).collect();
                    ensure(got == want, || format!("graph {g}, seed s{seed:02}, {dir:?}, depth {depth:?}: got {got:?}, want {want:?}"))?;
                    queries += 1;
                }
            }
        }
    }
    let variants = flop_variants();
    for (i, v) in variants.iter().enumerate() {
        let d = Design::from_text(&v.text, "f").map_err(|e| format!("variant {i} does not elaborate: {e}\n{}", v.text))?;
        let info = d.graph.flop_properties("q").map_err(|e| format!("variant {i}: {e}\n{}", v.text))?;
        let want_edge = if v.clock_neg { Edge::Neg } else { Edge::Pos };
        ensure(info.clock == "clk" && info.edge == want_edge, || format!("variant {i}: clock {} {:?}", info.clock, info.edge))?;
        let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<String>();
        ensure(strip(&info.data_input) == strip(&v.data), || format!("variant {i}: data input '{}' vs '{}'", info.data_input, v.data))?;
        match (&v.reset, &info.reset) {
            (None, None) => {}
            (Some((sig, high, async_, value)), Some(r)) => {
                let pol = if *high { Polarity::ActiveHigh } else { Polarity::ActiveLow };
                let kind = if *async_ { ResetKind::Async } else { ResetKind::Sync };
                ensure(r.signal == *sig && r.polarity == pol && r.kind == kind && r.value == *value, || format!("variant {i}: reset {r:?}\n{}", v.text))?;
            }
            (w, g) => return Err(format!("variant {i}: reset expected {w:?}, got {g:?}\n{}", v.text)),
        }
    }
    ensure(variants.len() >= 200, || format!("only {} flop variants", variants.len()))?;
    Ok(format!("100 random graphs ({queries} cone queries) match brute-force reachability; {} flop variants classified correctly", variants.len()))
}

// 5 -------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for inst in 0..1000 {
        let dim = rng.gen_range(1..8);
        let n = rng.gen_range(1..40);
        let ids = rng.gen_range(1..=n);
        // Values on a coarse grid make exact ties common.
        let grid = |rng: &mut ChaCha8Rng| (0..dim).map(|_| f64::from(rng.gen_range(-2i32..=2)) / 2.0).collect::<Vec<f64>>();
        let entries: Vec<Entry> = (0..n)
            .map(|_| {
                let id = format!("{:016x}", rng.gen_range(0..ids));
                let chunk = Chunk {
                    chunk_id: id,
                    kind: ChunkKind::Assign,
                    owner_module: "m".into(),
                    canonical_text: "assign in m\n".into(),
                    source_span: Default::default(),
                    signals: Default::default(),
                };
                Entry { chunk, vector: grid(&mut rng) }
            })
            .collect();
        let kb = KnowledgeBase { design_id: "d".into(), embedder_id: "e".into(), dim, entries, interface_index: Default::default(), signal_index: Default::default() };
        let q = grid(&mut rng);
        let k = rng.gen_range(1..=n + 2);
        let got = kb.search_vector(&Embedding { embedder_id: "e".into(), values: q.clone() }, k).unwrap();
        let mut scan: Vec<(f64, &str, usize)> = kb
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let mut s = 0.0;
                for j in 0..dim {
                    s += e.vector[j] * q[j];
                }
                (s.clamp(-1.0, 1.0), e.chunk.chunk_id.as_str(), i)
            })
            .collect();
        scan.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        let want: Vec<(String, f64)> = scan.iter().take(k).map(|x| (x.1.to_string(), x.0)).collect();
        let got: Vec<(String, f64)> = got.into_iter().map(|h| (h.chunk_id, h.score)).collect();
        ensure(got == want, || format!("instance {inst}: got {got:?}, want {want:?}"))?;
    }
    Ok("1000 random instances rank identically to a full-scan argsort (score desc, chunk_id asc, insertion order)".into())
}

// 6 -------------------------------------------------------------------------

fn binom(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn criterion_6() -> Outcome {
    let mut checked = 0;
    for n in 1..=8usize {
        for c in 0..=n {
            let outcomes: Vec<bool> = (0..n).map(|i| i < c).collect();
            for k in 1..=n {
                // Count k-subsets of the n trials that contain a success.
                let (mut hit, mut total) = (0u64, 0u64);
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize == k {
                        total += 1;
                        if (0..n).any(|i| mask & (1 << i) != 0 && outcomes[i]) {
                            hit += 1;
                        }
                    }
                }
                assert_eq!(total, binom(n, k));
                let want = hit as f64 / total as f64;
                let got = func_at_k(&outcomes, k).map_err(|e| e.to_string())?;
                ensure((got - want).abs() <= 1e-12, || format!("n={n} c={c} k={k}: {got} vs {want}"))?;
                checked += 1;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for set in 0..50 {
        let m = rng.gen_range(1..30);
        let reports: Vec<CaseReport> = (0..m).map(|i| synthetic_report(&mut rng, i)).collect();
        let got = aggregate_metrics(&reports).map_err(|e| e.to_string())?;
        // Spreadsheet-style recomputation from the raw counts.
        let mut syn = 0.0;
        let mut func = 0.0;
        let (mut p, mut f, mut u) = (0, 0, 0);
        for r in &reports {
            let compiled = r.syntax_score == 1;
            syn += if compiled { 1.0 } else { 0.0 };
            let total = r.counts.proven + r.counts.falsified + r.counts.undetermined;
            func += if compiled && total > 0 { r.counts.proven as f64 / total as f64 } else { 0.0 };
            p += r.counts.proven;
            f += r.counts.falsified;
            u += r.counts.undetermined;
        }
        let n = reports.len() as f64;
        ensure((got.syntax - 100.0 * syn / n).abs() < 1e-9, || format!("set {set}: syntax {} vs {}", got.syntax, 100.0 * syn / n))?;
        ensure((got.functionality - 100.0 * func / n).abs() < 1e-9, || format!("set {set}: functionality {} vs {}", got.functionality, 100.0 * func / n))?;
        ensure((got.proven, got.falsified, got.undetermined) == (p, f, u), || format!("set {set}: counts"))?;
    }
    Ok(format!("func_at_k equals subset enumeration on {checked} (n, c, k) triples; aggregate_metrics matches recomputation on 50 sets"))
}

// 7 -------------------------------------------------------------------------

/// Records which tools each request advertised.
struct Recording {
    inner: ScriptedModel,
    advertised: Vec<Vec<String>>,
}

impl ChatModel for Recording {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<Message, LlmError> {
        self.advertised.push(req.tools.iter().map(|t| t.name.clone()).collect());
        self.inner.chat(req)
    }
}

fn criterion_7() -> Outcome {
    let suite = bench::load_cases(&corpus_dir()).map_err(|e| e.to_string())?;
    let emb = TrigramEmbedder::default();
    let mut lines = Vec::new();
    for ab in [Ablation::NoRag, Ablation::NoStructural, Ablation::NoVerifyLoop, Ablation::Baseline] {
        let cfg = BenchConfig { trials: 1, jobs: 2, agent: AgentConfig { ablation: ab, ..AgentConfig::default() }, llm: LlmSource::Replay { file: None }, ..BenchConfig::default() };
        let outs = bench::run_trials(&suite.cases, &cfg, &emb, None);
        for o in &outs {
            let r = &o.report;
            ensure(r.error.is_none(), || format!("{ab}: {} failed: {:?}", r.case_id, r.error))?;
            let a = o.agent.as_ref().unwrap();
            let cats: Vec<ToolCategory> = a.tool_call_log.iter().map(|e| tool_category(&e.call.name).unwrap()).collect();
            match ab {
                Ablation::NoRag => ensure(!cats.contains(&ToolCategory::Retrieval), || format!("{}: retrieval call logged", r.case_id))?,
                Ablation::NoStructural => ensure(!cats.contains(&ToolCategory::Structural), || format!("{}: structural call logged", r.case_id))?,
                Ablation::NoVerifyLoop => ensure(r.rounds_phase_b == 1, || format!("{}: {} verify rounds", r.case_id, r.rounds_phase_b))?,
                Ablation::Baseline => ensure(r.tools.total == 0 && r.tools.rejected == 0 && r.rounds_phase_a == 0 && r.rounds_phase_b == 1, || format!("{}: baseline made tool calls", r.case_id))?,
                Ablation::None => {}
            }
        }
        // The schema the model sees.
        let case = suite.cases.iter().find(|c| c.case_id == "fsm_exec_units").unwrap();
        let chunks = chunk_design(&case.design.unit);
        let kb = KnowledgeBase::build("d", chunks, &emb).unwrap();
        let ctx = ToolContext { design: &case.design, kb: &kb, embedder: &emb };
        let mut model = Recording { inner: ScriptedModel::load(&case.trajectory(0).unwrap()).unwrap(), advertised: Vec::new() };
        run_agent(&case.spec, &case.design, &ctx, &mut model, &AgentConfig { ablation: ab, ..AgentConfig::default() });
        let all: Vec<&String> = model.advertised.iter().flatten().collect();
        let bad = all.iter().any(|n| match ab {
            Ablation::NoRag => tool_category(n) == Some(ToolCategory::Retrieval),
            Ablation::NoStructural => tool_category(n) == Some(ToolCategory::Structural),
            Ablation::Baseline => true,
            _ => false,
        });
        ensure(!bad, || format!("{ab}: forbidden tool advertised: {all:?}"))?;
        lines.push(format!("{ab} ok"));
    }
    Ok(format!("{} over {} cases", lines.join(", "), suite.cases.len()))
}

// 8 -------------------------------------------------------------------------

const POOL: &[&str] = &[
    "p_fall: assert property (@(posedge clk) disable iff (rst) q |=> !q);",
    "p_rise: assert property (@(posedge clk) disable iff (rst) !q |=> q);",
    "p_bad: assert property (@(posedge clk) q |-> ##1 q);",
    "p_undecl: assert property (@(posedge clk) nosuch |-> q);",
    "p_syntax: assert property (@(posedge clk) q |-> );",
    "assert property (@(posedge clk) q || !q);",
];

const TOOL_NAMES: &[&str] = &[
    "search_design",
    "get_module_interface",
    "get_hierarchy",
    "resolve_parameter",
    "get_always_blocks_for_signal",
    "get_signal_cone",
    "get_flop_info",
    "not_a_tool",
];

fn random_entry(rng: &mut ChaCha8Rng) -> ScriptEntry {
    let phase = match rng.gen_range(0..5) {
        0 => None,
        1 | 2 => Some(proofloop::agent::Phase::Gather),
        3 => Some(proofloop::agent::Phase::Generate),
        _ => Some(proofloop::agent::Phase::Repair),
    };
    let content = if rng.gen_bool(0.6) {
        let n = rng.gen_range(1..4);
        let lines: Vec<&str> = (0..n).map(|_| POOL[rng.gen_range(0..POOL.len())]).collect();
        format!("```\n{}\n```", lines.join("\n"))
    } else {
        "thinking".to_string()
    };
    let calls = if rng.gen_bool(0.5) {
        (0..rng.gen_range(1..4))
            .map(|_| {
                let name = TOOL_NAMES[rng.gen_range(0..TOOL_NAMES.len())].to_string();
                let arguments = match rng.gen_range(0..4) {
                    0 => serde_json::json!({}),
                    1 => serde_json::json!({"signal": "q", "direction": "fanin"}),
                    2 => serde_json::json!({"reg": "q"}),
                    _ => serde_json::json!({"query": "toggle", "k": 2}),
                };
                ScriptCall { id: None, name, arguments }
            })
            .collect()
    } else {
        Vec::new()
    };
    ScriptEntry { phase, content, tool_calls: calls }
}

fn criterion_8() -> Outcome {
    let d = design(TOGGLE, "toggle");
    let emb = TrigramEmbedder::default();
    let kb = KnowledgeBase::build("t", chunk_design(&d.unit), &emb).unwrap();
    let ctx = ToolContext { design: &d, kb: &kb, embedder: &emb };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut stats: BTreeMap<&str, usize> = BTreeMap::new();
    for run in 0..1000 {
        let n = rng.gen_range(0..16);
        let entries: Vec<ScriptEntry> = (0..n).map(|_| random_entry(&mut rng)).collect();
        let ablation = Ablation::ALL[rng.gen_range(0..Ablation::ALL.len())];
        let cfg = AgentConfig { ablation, budget: Budget { depth: 6, ..Budget::default() }, ..AgentConfig::default() };
        let mut model = ScriptedModel::new(entries);
        let r = run_agent("The flop toggles.", &d, &ctx, &mut model, &cfg);
        ensure(r.rounds_used_phase_a <= 6, || format!("run {run}: {} phase A rounds", r.rounds_used_phase_a))?;
        ensure(r.rounds_used_phase_b <= 3 && r.rounds.len() == r.rounds_used_phase_b, || format!("run {run}: {} phase B rounds", r.rounds_used_phase_b))?;
        ensure(r.conversation.is_legal(), || format!("run {run}: illegal transcript"))?;
        if r.rounds.is_empty() {
            *stats.entry("no candidate").or_default() += 1;
            ensure(r.best_round.is_none() && r.candidate.is_none(), || format!("run {run}: best round without rounds"))?;
            continue;
        }
        // Independent best-round choice from the raw results.
        let key = |i: usize| {
            let rr = &r.rounds[i];
            if rr.result.compile_ok {
                let p = rr.result.per_property.iter().filter(|x| x.status == Status::Proven).count();
                let f = rr.result.per_property.iter().filter(|x| x.status == Status::Falsified).count();
                (std::cmp::Reverse(p), f, i)
            } else {
                (std::cmp::Reverse(0), rr.candidate.assertions.len().max(1), i)
            }
        };
        let last = r.rounds.len() - 1;
        let lr = &r.rounds[last].result;
        let stopped = lr.compile_ok && lr.per_property.iter().all(|x| x.status != Status::Falsified);
        let want = if stopped { last } else { (0..r.rounds.len()).min_by_key(|&i| key(i)).unwrap() };
        ensure(r.best_round == Some(want), || format!("run {run}: best round {:?}, expected {want}", r.best_round))?;
        ensure(r.candidate.as_ref() == Some(&r.rounds[want].candidate), || format!("run {run}: candidate is not the best round's"))?;
        *stats.entry(if stopped { "early stop" } else { "cap or abort" }).or_default() += 1;
    }
    Ok(format!("1000 fuzzed trajectories within caps, legal transcripts, best round as specified ({stats:?})"))
}

// 9 -------------------------------------------------------------------------

fn word(rng: &mut ChaCha8Rng, len: usize) -> String {
    const A: &[u8] = b"abcdefghijklmnopqrstuvwxyz_0123456789";
    let mut s = String::from("s");
    for _ in 0..len {
        s.push(A[rng.gen_range(0..A.len())] as char);
    }
    s
}

pub fn random_result(rng: &mut ChaCha8Rng) -> ProofResult {
    let ndiag = rng.gen_range(0..4);
    let diagnostics: Vec<Diagnostic> = (0..ndiag)
        .map(|_| Diagnostic {
            file: format!("{}.sv", word(rng, 4)),
            line: rng.gen_range(1..500),
            col: if rng.gen_bool(0.3) { 0 } else { rng.gen_range(1..80) },
            severity: if rng.gen_bool(0.5) { Severity::Error } else { Severity::Warning },
            message: format!("{}: {} {}", word(rng, 3), word(rng, 6), rng.gen_range(0..100)),
        })
        .collect();
    let compile_ok = !diagnostics.iter().any(Diagnostic::is_error);
    let nprop = if compile_ok { rng.gen_range(0..6) } else { 0 };
    let mut per_property = Vec::new();
    for i in 0..nprop {
        let status = [Status::Proven, Status::Falsified, Status::Undetermined][rng.gen_range(0..3)];
        let counterexample = (status == Status::Falsified).then(|| {
            let length = rng.gen_range(1..10);
            let signals = (0..rng.gen_range(1..4)).map(|_| (word(rng, 3), (0..length).map(|_| { let bits = rng.gen_range(1..64); rng.gen_range(0..1u64 << bits) }).collect())).collect();
            CexTrace { signals, length, violating_cycle: rng.gen_range(0..length) }
        });
        let vacuous = if status == Status::Falsified { None } else { [None, Some(true), Some(false)][rng.gen_range(0..3)] };
        let message = if rng.gen_bool(0.2) { String::new() } else { format!("{} (bound={})", word(rng, 5), rng.gen_range(0..64)) };
        per_property.push(PropertyResult { label: format!("{}_{i}", word(rng, 3)), status, vacuous, counterexample, message });
    }
    ProofResult { compile_ok, diagnostics, per_property, bound_reached: rng.gen_range(0..100) }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..500 {
        let r = random_result(&mut rng);
        let parsed = parse_external_log(&render_log(&r)).map_err(|e| format!("instance {i}: {e}"))?;
        ensure(parsed == r, || format!("instance {i}: round trip differs\n{}", render_log(&r)))?;
    }
    Ok("500 random results survive render -> parse unchanged".into())
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("case-study replay", criterion_1),
        ("checker soundness", criterion_2),
        ("vacuity fixtures", criterion_3),
        ("structural oracles", criterion_4),
        ("retrieval oracle", criterion_5),
        ("metrics", criterion_6),
        ("ablation audit", criterion_7),
        ("loop bounds", criterion_8),
        ("external adapter round trip", criterion_9),
    ];
    // Keep panics inside a criterion from printing a backtrace mid-report.
    std::panic::set_hook(Box::new(|_| {}));
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match r {
            Ok(detail) => println!("criterion {} ({name}): PASS - {detail} [{secs:.2}s]", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {} ({name}): FAIL - {e} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of 9 criteria passed in {:.1}s", 9 - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
