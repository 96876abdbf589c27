use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Message { role: Role::Assistant, content: content.into(), tool_calls, tool_call_id: None }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Message { role: Role::Tool, content: content.into(), tool_calls: Vec::new(), tool_call_id: Some(call_id.into()) }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConversationError {
    #[error("a system message may only open the conversation")]
    MisplacedSystem,
    #[error("tool message for '{0}' answers no pending tool call")]
    UnexpectedToolMessage(String),
    #[error("tool calls {0:?} are still unanswered")]
    PendingCalls(Vec<String>),
    #[error("duplicate tool call id '{0}' in one assistant message")]
    DuplicateCallId(String),
}

pub const TRUNCATION_MARKER: &str = "…[truncated]";
pub const DEFAULT_OBSERVATION_CAP: usize = 4000;
pub const DEFAULT_OBSERVATION_BUDGET: usize = 120_000;

/// Cuts `text` to at most `cap` characters, ending with the marker when cut.
pub fn truncate_observation(text: &str, cap: usize) -> String {
    if text.chars().count() <= cap {
        return text.to_string();
    }
    let keep = cap.saturating_sub(TRUNCATION_MARKER.chars().count());
    let mut s: String = text.chars().take(keep).collect();
    s.push_str(TRUNCATION_MARKER);
    s
}

/// An append-only transcript that enforces message ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
    /// Maximum total characters of tool observations.
    pub budget: usize,
    pub observation_cap: usize,
    pub observation_chars: usize,
    #[serde(skip)]
    pending: BTreeSet<String>,
}

impl Conversation {
    pub fn new(budget: usize, observation_cap: usize) -> Self {
        Conversation { messages: Vec::new(), budget, observation_cap, observation_chars: 0, pending: BTreeSet::new() }
    }

    pub fn pending_calls(&self) -> &BTreeSet<String> {
        &self.pending
    }

    pub fn push(&mut self, m: Message) -> Result<(), ConversationError> {
        match m.role {
            Role::System if !self.messages.is_empty() => return Err(ConversationError::MisplacedSystem),
            Role::Tool => {
                let id = m.tool_call_id.clone().unwrap_or_default();
                if !self.pending.remove(&id) {
                    return Err(ConversationError::UnexpectedToolMessage(id));
                }
            }
            _ if !self.pending.is_empty() => return Err(ConversationError::PendingCalls(self.pending.iter().cloned().collect())),
            Role::Assistant => {
                for c in &m.tool_calls {
                    if !self.pending.insert(c.id.clone()) {
                        return Err(ConversationError::DuplicateCallId(c.id.clone()));
                    }
                }
            }
            _ => {}
        }
        self.messages.push(m);
        Ok(())
    }

    /// Appends an observation, truncated to the per-observation cap and
    /// replaced by a notice once the total budget is spent.
    pub fn push_observation(&mut self, call_id: &str, text: &str) -> Result<(), ConversationError> {
        let mut content = truncate_observation(text, self.observation_cap);
        let n = content.chars().count();
        if self.observation_chars + n > self.budget {
            content = r#"{"status":"error","code":"budget_exhausted","message":"observation budget exhausted"}"#.to_string();
        } else {
            self.observation_chars += n;
        }
        self.push(Message::tool(call_id, content))
    }

    /// Checks the ordering invariants over the whole transcript.
    pub fn is_legal(&self) -> bool {
        let mut c = Conversation::new(usize::MAX, usize::MAX);
        self.messages.iter().all(|m| c.push(m.clone()).is_ok())
    }

    pub fn tool_rounds(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant && !m.tool_calls.is_empty()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn call(id: &str) -> ToolCall {
        ToolCall { id: id.into(), name: "get_hierarchy".into(), arguments: json!({}) }
    }

    #[test]
    fn ordering_rules() {
        let mut c = Conversation::new(1000, 100);
        c.push(Message::system("s")).unwrap();
        assert_eq!(c.push(Message::system("s")), Err(ConversationError::MisplacedSystem));
        c.push(Message::user("u")).unwrap();
        assert!(matches!(c.push(Message::tool("x", "o")), Err(ConversationError::UnexpectedToolMessage(_))));
        c.push(Message::assistant("", vec![call("a"), call("b")])).unwrap();
        assert!(matches!(c.push(Message::user("u")), Err(ConversationError::PendingCalls(_))));
        c.push(Message::tool("a", "o")).unwrap();
        c.push(Message::tool("b", "o")).unwrap();
        c.push(Message::user("u")).unwrap();
        assert!(c.is_legal());
    }

    #[test]
    fn truncation() {
        let long = "x".repeat(5000);
        let t = truncate_observation(&long, DEFAULT_OBSERVATION_CAP);
        assert_eq!(t.chars().count(), DEFAULT_OBSERVATION_CAP);
        assert!(t.ends_with(TRUNCATION_MARKER));
        assert_eq!(truncate_observation("short", 10), "short");
    }

    #[test]
    fn budget_exhaustion() {
        let mut c = Conversation::new(10, 100);
        c.push(Message::assistant("", vec![call("a"), call("b")])).unwrap();
        c.push_observation("a", "12345678").unwrap();
        c.push_observation("b", "12345678").unwrap();
        assert!(c.messages[2].content.contains("budget_exhausted"));
    }
}
