mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;

use proptest::prelude::*;
use serde_json::json;

use proofloop::agent::conversation::{truncate_observation, TRUNCATION_MARKER};
use proofloop::agent::llm::parse_reply;
use proofloop::agent::{
    build_repair_prompt, dispatch_tool, extract_assertions, run_agent, schemas, Ablation, AgentConfig, ChatModel, ChatRequest, Conversation, HttpChatModel, Message,
    ObsStatus, Phase, Sampling, ScriptedModel, SvaCandidate, ToolCategory, ToolContext,
};
use proofloop::kb::{design_id, KnowledgeBase, TrigramEmbedder};
use proofloop::rtl::chunk_design;
use proofloop::solver::{prove, AssertionSrc, Budget, Status};
use proofloop::Design;

use common::*;

fn kb_for(d: &Design) -> KnowledgeBase {
    let chunks = chunk_design(&d.unit);
    KnowledgeBase::build(design_id(&chunks), chunks, &TrigramEmbedder::default()).unwrap()
}

#[test]
fn tools_answer_on_case_study() {
    let d = corpus_design("fsm_exec_units");
    let kb = kb_for(&d);
    let emb = TrigramEmbedder::default();
    let ctx = ToolContext { design: &d, kb: &kb, embedder: &emb };
    let ok = |name: &str, args: serde_json::Value| {
        let o = dispatch_tool(name, "c", &args, &ctx);
        assert_eq!(o.status, ObsStatus::Ok, "{name}: {}", o.render());
        o.payload
    };
    let flop = ok("get_flop_info", json!({"reg": "u_dec.stage_q"}));
    assert_eq!(flop["reset"]["kind"], "sync");
    let p = ok("resolve_parameter", json!({"module": "u_dec", "parameter": "W"}));
    assert!(p.to_string().contains('2'));
    let p = ok("resolve_parameter", json!({"module": "decode_unit", "parameter": "W", "overrides": {"W": 5}}));
    assert!(p.to_string().contains('5'));
    assert!(ok("get_hierarchy", json!({})).to_string().contains("u_wb"));
    assert!(ok("get_module_interface", json!({"module": "mem_unit"})).to_string().contains("srst"));
    assert!(ok("get_signal_cone", json!({"signal": "done", "direction": "fanin", "depth": 2})).to_string().contains("u_wb.valid"));
    assert!(ok("search_design", json!({"query": "ready", "k": 2})).to_string().contains("chunk_id"));
    assert!(ok("get_always_blocks_for_signal", json!({"signal": "ready"})).to_string().contains("ready[3]"));
}

#[test]
fn tool_errors_are_observations() {
    let d = design(TOGGLE, "toggle");
    let kb = kb_for(&d);
    let emb = TrigramEmbedder::default();
    let ctx = ToolContext { design: &d, kb: &kb, embedder: &emb };
    let code = |name: &str, args: serde_json::Value| dispatch_tool(name, "c", &args, &ctx).error_code().map(str::to_string);
    assert_eq!(code("frobnicate", json!({})).as_deref(), Some("unknown_tool"));
    assert_eq!(code("get_flop_info", json!({})).as_deref(), Some("invalid_arguments"));
    assert_eq!(code("get_flop_info", json!({"reg": 3})).as_deref(), Some("invalid_arguments"));
    assert_eq!(code("get_signal_cone", json!({"signal": "q", "direction": "up"})).as_deref(), Some("invalid_arguments"));
    assert_eq!(code("search_design", json!({"query": "q", "k": 0})).as_deref(), Some("invalid_arguments"));
    assert_eq!(code("get_signal_cone", json!({"signal": "q", "direction": "fanin", "extra": 1})).as_deref(), Some("invalid_arguments"));
    assert!(code("get_flop_info", json!({"reg": "nope"})).is_some());
}

#[test]
fn schemas_respect_categories() {
    let all = schemas(&[ToolCategory::Retrieval, ToolCategory::Structural]);
    assert_eq!(all.len(), 7);
    let r = schemas(&[ToolCategory::Retrieval]);
    assert!(r.iter().all(|s| !s.name.contains("cone") && s.name != "get_flop_info"));
    for s in &all {
        assert_eq!(s.parameters["additionalProperties"], false);
    }
    for a in Ablation::ALL {
        assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
    }
}

#[test]
fn scripted_model_respects_phases() {
    let mut m = ScriptedModel::parse(
        r#"{"phase": "a", "content": "look", "tool_calls": [{"name": "get_hierarchy"}]}
{"phase": "generate", "content": "gen"}
{"phase": "repair", "content": "fix"}
"#,
    )
    .unwrap();
    let req = |phase| ChatRequest { messages: &[], tools: &[], sampling: Sampling::DETERMINISTIC, phase };
    // A generate request drops the leftover gather entry.
    assert_eq!(m.chat(&req(Phase::Generate)).unwrap().content, "gen");
    // A gather request while the next entry is for repair gets an empty reply.
    let r = m.chat(&req(Phase::Gather)).unwrap();
    assert!(r.content.is_empty() && r.tool_calls.is_empty());
    assert_eq!(m.chat(&req(Phase::Repair)).unwrap().content, "fix");
    assert!(m.chat(&req(Phase::Repair)).is_err());
    assert!(ScriptedModel::parse("{\"content\": 3}\n").is_err());
}

#[test]
fn extraction_handles_labels_and_nesting() {
    let text = "Here:\n```systemverilog\na: assert property (@(posedge clk) (x && (y)) |-> z);\nassert property (@(posedge clk) w);\na: assert property (@(posedge clk) v);\n```\nnot code: b: assert property (q);";
    let got = extract_assertions(text).unwrap();
    let labels: Vec<&str> = got.iter().map(|a| a.label.as_str()).collect();
    assert_eq!(labels, ["a", "assert_2", "a_2"]);
    assert_eq!(got[0].property, "@(posedge clk) (x && (y)) |-> z");
    assert!(extract_assertions("no fences at all").is_none());
}

#[test]
fn repair_prompt_quotes_failures() {
    let d = design(TOGGLE, "toggle");
    let cand = SvaCandidate {
        assertions: vec![AssertionSrc::new("ok", "@(posedge clk) disable iff (rst) q |=> !q"), AssertionSrc::new("bad", "@(posedge clk) q |-> ##1 q")],
        bind_target: "toggle".into(),
        raw_llm_text: String::new(),
        round_index: 0,
    };
    let r = prove(&d, &cand.assertions, &Budget { depth: 8, ..Budget::default() });
    assert_eq!(r.per_property[1].status, Status::Falsified);
    let m = build_repair_prompt(&cand, &r);
    assert!(m.content.contains("bad"));
    assert!(m.content.contains("copy them unchanged"));
    let broken = SvaCandidate { assertions: vec![AssertionSrc::new("x", "@(posedge clk) nope")], ..cand.clone() };
    let r = prove(&d, &broken.assertions, &Budget::default());
    let m = build_repair_prompt(&broken, &r);
    assert!(m.content.contains("nope"));
}

#[test]
fn no_verify_loop_stops_after_one_round() {
    let d = corpus_design("fsm_exec_units");
    let kb = kb_for(&d);
    let emb = TrigramEmbedder::default();
    let ctx = ToolContext { design: &d, kb: &kb, embedder: &emb };
    let mut m = ScriptedModel::load(&corpus_dir().join("fsm_exec_units/trajectory.jsonl")).unwrap();
    let cfg = AgentConfig { ablation: Ablation::NoVerifyLoop, ..AgentConfig::default() };
    let r = run_agent("spec", &d, &ctx, &mut m, &cfg);
    assert_eq!(r.rounds.len(), 1);
    assert!(!r.rounds[0].result.compile_ok);
}

#[test]
fn conversation_rejects_orphan_observation() {
    let mut c = Conversation::new(10_000, 100);
    c.push(Message::system("s")).unwrap();
    c.push(Message::user("u")).unwrap();
    assert!(c.push_observation("nope", "x").is_err());
    assert!(c.is_legal());
}

#[test]
fn reply_decoding() {
    let v = json!({"choices": [{"message": {"content": null, "tool_calls": [
        {"id": "t1", "type": "function", "function": {"name": "get_flop_info", "arguments": "{\"reg\": \"q\"}"}},
        {"type": "function", "function": {"name": "get_hierarchy", "arguments": "not json"}}
    ]}}]});
    let m = parse_reply(&v).unwrap();
    assert_eq!(m.tool_calls[0].arguments, json!({"reg": "q"}));
    assert_eq!(m.tool_calls[1].id, "call_1");
    assert_eq!(m.tool_calls[1].arguments, json!("not json"));
    assert!(parse_reply(&json!({"choices": []})).is_err());
}

#[test]
fn http_model_speaks_chat_completions() {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", l.local_addr().unwrap());
    let h = std::thread::spawn(move || {
        let (s, _) = l.accept().unwrap();
        let mut r = BufReader::new(s.try_clone().unwrap());
        let (mut len, mut path, mut auth) = (0, String::new(), String::new());
        loop {
            let mut line = String::new();
            r.read_line(&mut line).unwrap();
            if path.is_empty() {
                path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            }
            if line == "\r\n" {
                break;
            }
            let lower = line.to_ascii_lowercase();
            if let Some(v) = lower.strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            if lower.starts_with("authorization:") {
                auth = line.trim().to_string();
            }
        }
        let mut body = vec![0; len];
        r.read_exact(&mut body).unwrap();
        let reply = r#"{"choices": [{"message": {"role": "assistant", "content": "done"}}]}"#;
        let mut s = s;
        write!(s, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}", reply.len()).unwrap();
        (path, auth, String::from_utf8(body).unwrap())
    });
    let mut m = HttpChatModel::new(&url, Some("k3y".into()), "mdl");
    let tools = schemas(&[ToolCategory::Structural]);
    let msgs = [Message::system("s"), Message::user("u")];
    let sampling = Sampling { seed: Some(7), ..Sampling::NUCLEUS };
    let out = m.chat(&ChatRequest { messages: &msgs, tools: &tools, sampling, phase: Phase::Gather }).unwrap();
    assert_eq!(out.content, "done");
    let (path, auth, body) = h.join().unwrap();
    assert_eq!(path, "/v1/chat/completions");
    assert!(auth.ends_with("Bearer k3y"));
    let body: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(body["model"], "mdl");
    assert_eq!(body["seed"], 7);
    assert_eq!(body["tools"].as_array().unwrap().len(), 2);
    assert_eq!(body["messages"][1]["role"], "user");
}

proptest! {
    #[test]
    fn truncation_respects_cap(text in "\\PC{0,300}", cap in 13usize..200) {
        let t = truncate_observation(&text, cap);
        prop_assert!(t.chars().count() <= cap);
        if text.chars().count() <= cap {
            prop_assert_eq!(&t, &text);
        } else {
            prop_assert!(t.ends_with(TRUNCATION_MARKER));
            let kept = t.strip_suffix(TRUNCATION_MARKER).unwrap();
            prop_assert!(text.starts_with(kept));
        }
    }

    #[test]
    fn extraction_recovers_rendered_assertions(props in prop::collection::vec(("[a-z][a-z0-9_]{0,6}", "[a-z]{1,4}", 0u8..3), 1..6)) {
        let mut body = String::new();
        for (label, sig, shape) in &props {
            let p = match shape {
                0 => format!("@(posedge clk) {sig}"),
                1 => format!("@(posedge clk) ({sig} && !{sig}) |-> ##1 {sig}"),
                _ => format!("@(posedge clk) disable iff (rst) $rose({sig}) |=> ({sig})"),
            };
            body.push_str(&format!("p_{label}: assert property ({p});\n"));
        }
        let got = extract_assertions(&format!("text\n```\n{body}```\n")).unwrap();
        prop_assert_eq!(got.len(), props.len());
        let mut seen = std::collections::BTreeSet::new();
        for (g, (label, _, _)) in got.iter().zip(&props) {
            let want = format!("p_{}", label);
            prop_assert!(g.label.starts_with(&want));
            prop_assert!(seen.insert(g.label.clone()));
        }
    }
}

/// Runs only when `PROOFLOOP_LLM_URL` (and optionally a key and model) are set.
#[test]
fn live_model_smoke() {
    let Some(mut m) = HttpChatModel::from_env() else {
        eprintln!("skipped: PROOFLOOP_LLM_URL not set");
        return;
    };
    let d = design(TOGGLE, "toggle");
    let kb = kb_for(&d);
    let emb = TrigramEmbedder::default();
    let ctx = ToolContext { design: &d, kb: &kb, embedder: &emb };
    let cfg = AgentConfig { budget: Budget { depth: 8, ..Budget::default() }, ..AgentConfig::default() };
    let r = run_agent("q toggles every cycle while rst is low and is 0 after rst.", &d, &ctx, &mut m, &cfg);
    assert!(r.conversation.is_legal());
    assert!(r.rounds_used_phase_a <= 6 && r.rounds_used_phase_b <= 3);
}
