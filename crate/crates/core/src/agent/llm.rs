//! Chat-model clients: an HTTP chat-completions client and a scripted
//! replay client for deterministic runs.

use std::collections::VecDeque;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::agent::conversation::{Message, Role, ToolCall};
use crate::agent::tools::ToolSchema;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("llm transport failure: {0}")]
    Transport(String),
    #[error("malformed llm reply: {0}")]
    Protocol(String),
    #[error("scripted trajectory exhausted")]
    Exhausted,
    #[error("trajectory line {line}: {message}")]
    Trajectory { line: usize, message: String },
}

/// Which part of the loop a request belongs to. Scripted trajectories tag
/// entries with it so ablated runs can skip what they never ask for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    #[serde(rename = "a")]
    Gather,
    Generate,
    Repair,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
    pub seed: Option<u64>,
}

impl Sampling {
    pub const DETERMINISTIC: Sampling = Sampling { temperature: 0.0, top_p: 1.0, seed: None };
    pub const NUCLEUS: Sampling = Sampling { temperature: 0.8, top_p: 0.95, seed: None };
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling::DETERMINISTIC
    }
}

pub struct ChatRequest<'a> {
    pub messages: &'a [Message],
    pub tools: &'a [ToolSchema],
    pub sampling: Sampling,
    pub phase: Phase,
}

pub trait ChatModel: Send {
    /// Returns the next assistant message.
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<Message, LlmError>;
}

/// One line of a trajectory file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<Phase>,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ScriptCall>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptCall {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

/// Replays canned assistant messages in order.
///
/// An entry tagged with an earlier phase than the request is skipped; one
/// tagged with a later phase is left in place and an empty reply (no tool
/// calls) is returned instead, which ends Phase A.
#[derive(Clone, Debug)]
pub struct ScriptedModel {
    entries: VecDeque<ScriptEntry>,
    next_id: usize,
}

impl ScriptedModel {
    pub fn new(entries: Vec<ScriptEntry>) -> Self {
        ScriptedModel { entries: entries.into(), next_id: 0 }
    }

    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: ScriptEntry = serde_json::from_str(line).map_err(|e| LlmError::Trajectory { line: i + 1, message: e.to_string() })?;
            if e.tool_calls.iter().any(|c| !c.arguments.is_object() && !c.arguments.is_null()) {
                return Err(LlmError::Trajectory { line: i + 1, message: "tool call arguments must be a JSON object".into() });
            }
            entries.push(e);
        }
        Ok(Self::new(entries))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Trajectory { line: 0, message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn remaining(&self) -> usize {
        self.entries.len()
    }
}

impl ChatModel for ScriptedModel {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<Message, LlmError> {
        loop {
            let Some(front) = self.entries.front() else { return Err(LlmError::Exhausted) };
            match front.phase {
                Some(p) if p < req.phase => {
                    self.entries.pop_front();
                }
                Some(p) if p > req.phase => return Ok(Message::assistant(String::new(), Vec::new())),
                _ => break,
            }
        }
        let e = self.entries.pop_front().expect("checked non-empty");
        let calls = e
            .tool_calls
            .into_iter()
            .map(|c| {
                self.next_id += 1;
                ToolCall {
                    id: c.id.unwrap_or_else(|| format!("call_{}", self.next_id)),
                    name: c.name,
                    arguments: if c.arguments.is_null() { json!({}) } else { c.arguments },
                }
            })
            .collect();
        Ok(Message::assistant(e.content, calls))
    }
}

/// Client for the prevailing chat-completions wire format.
pub struct HttpChatModel {
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpChatModel {
    pub fn new(url: &str, api_key: Option<String>, model: &str) -> Self {
        let url = if url.ends_with("/chat/completions") { url.to_string() } else { format!("{}/chat/completions", url.trim_end_matches('/')) };
        let client = reqwest::blocking::Client::builder().timeout(Duration::from_secs(300)).build().unwrap_or_default();
        HttpChatModel { url, api_key, model: model.to_string(), retries: 3, client }
    }

    /// Reads `PROOFLOOP_LLM_URL`, `PROOFLOOP_LLM_API_KEY` and `PROOFLOOP_LLM_MODEL`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("PROOFLOOP_LLM_URL").ok()?;
        let model = std::env::var("PROOFLOOP_LLM_MODEL").unwrap_or_else(|_| "default".into());
        Some(Self::new(&url, std::env::var("PROOFLOOP_LLM_API_KEY").ok(), &model))
    }

    pub fn request_body(&self, req: &ChatRequest<'_>) -> Value {
        let messages: Vec<Value> = req.messages.iter().map(wire_message).collect();
        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.sampling.temperature,
            "top_p": req.sampling.top_p,
        });
        if let Some(s) = req.sampling.seed {
            body["seed"] = json!(s);
        }
        if !req.tools.is_empty() {
            body["tools"] = Value::Array(
                req.tools
                    .iter()
                    .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
                    .collect(),
            );
        }
        body
    }
}

fn wire_message(m: &Message) -> Value {
    let role = match m.role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
        Role::Tool => "tool",
    };
    let mut v = json!({"role": role, "content": m.content});
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = Value::Array(
            m.tool_calls
                .iter()
                .map(|c| json!({"id": c.id, "type": "function", "function": {"name": c.name, "arguments": c.arguments.to_string()}}))
                .collect(),
        );
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

/// Decodes `choices[0].message` of a chat-completions reply.
pub fn parse_reply(v: &Value) -> Result<Message, LlmError> {
    let msg = v.pointer("/choices/0/message").ok_or_else(|| LlmError::Protocol("missing choices[0].message".into()))?;
    let content = msg.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut calls = Vec::new();
    for (i, c) in msg.get("tool_calls").and_then(Value::as_array).into_iter().flatten().enumerate() {
        let name = c.pointer("/function/name").and_then(Value::as_str).ok_or_else(|| LlmError::Protocol("tool call without a name".into()))?;
        let raw = c.pointer("/function/arguments").cloned().unwrap_or(json!({}));
        // Arguments arrive as a JSON string; undecodable text is passed on so
        // the dispatcher reports it as a validation error.
        let arguments = match raw {
            Value::String(s) => serde_json::from_str(&s).unwrap_or(Value::String(s)),
            other => other,
        };
        let id = c.get("id").and_then(Value::as_str).map(str::to_string).unwrap_or_else(|| format!("call_{i}"));
        calls.push(ToolCall { id, name: name.to_string(), arguments });
    }
    Ok(Message::assistant(content, calls))
}

impl ChatModel for HttpChatModel {
    fn chat(&mut self, req: &ChatRequest<'_>) -> Result<Message, LlmError> {
        let body = self.request_body(req);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(500 << attempt.min(4)));
            }
            let mut r = self.client.post(&self.url).json(&body);
            if let Some(k) = &self.api_key {
                r = r.bearer_auth(k);
            }
            match r.send() {
                Ok(resp) if resp.status().is_success() => {
                    let v: Value = resp.json().map_err(|e| LlmError::Protocol(e.to_string()))?;
                    return parse_reply(&v);
                }
                Ok(resp) if resp.status().is_server_error() || resp.status().as_u16() == 429 => last = format!("HTTP {}", resp.status()),
                Ok(resp) => return Err(LlmError::Transport(format!("HTTP {}", resp.status()))),
                Err(e) => last = e.to_string(),
            }
            log::warn!("llm request attempt {} failed: {last}", attempt + 1);
        }
        Err(LlmError::Transport(last))
    }
}
