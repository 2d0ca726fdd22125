//! Conversation histories and the completion backends that extend them.

mod mutation;
mod remote;
mod scripted;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::text::SourceError;

pub use mutation::{Defect, DefectError, MutationBackend};
pub use remote::{RemoteBackend, TokenBucket};
pub use scripted::ScriptedBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Append-only message list whose first entry is the system prompt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct History {
    messages: Vec<Message>,
}

impl History {
    pub fn new(system: impl Into<String>) -> Self {
        History {
            messages: vec![Message::system(system)],
        }
    }

    pub fn push(&mut self, m: Message) {
        self.messages.push(m);
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn last(&self) -> Option<&Message> {
        self.messages.last()
    }

    pub fn last_with_role(&self, role: Role) -> Option<&Message> {
        self.messages.iter().rev().find(|m| m.role == role)
    }

    /// Plain-text rendering with one header line per message.
    pub fn transcript(&self) -> String {
        self.messages
            .iter()
            .map(|m| format!("### {}\n{}\n", m.role.as_str(), m.content))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("script exhausted at step {0}")]
    ScriptExhausted(usize),
    #[error("mock backend: {0}")]
    Mock(String),
}

/// Produces one assistant message for a history. Implementations must
/// tolerate concurrent calls on independent histories.
pub trait Backend: Send + Sync {
    fn complete(&self, history: &History) -> Result<Message, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Remote,
    Scripted,
    #[default]
    Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: Option<String>,
    pub temperature: f64,
    pub seed: u64,
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub requests_per_second: f64,
    pub script_path: Option<PathBuf>,
    pub defect_spec: Option<PathBuf>,
    pub repair_probability: f64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Mutation,
            endpoint: None,
            model_name: None,
            temperature: 0.0,
            seed: 0,
            api_key_env: None,
            timeout_secs: 120,
            max_retries: 4,
            requests_per_second: 1.0,
            script_path: None,
            defect_spec: None,
            repair_probability: 1.0,
        }
    }
}

/// Outcome of [`syntax_repair_loop`]; `calls` counts backend invocations.
#[derive(Debug, Clone, PartialEq)]
pub struct Repaired<T> {
    pub value: T,
    pub calls: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RepairError {
    #[error("no parseable response after {} attempt(s)", .errors.len())]
    Exhausted { errors: Vec<SourceError>, calls: usize },
    #[error("{source}")]
    Backend { source: BackendError, calls: usize },
}

impl RepairError {
    pub fn calls(&self) -> usize {
        match self {
            RepairError::Exhausted { calls, .. } | RepairError::Backend { calls, .. } => *calls,
        }
    }
}

pub const SYNTAX_REPAIR_MARKER: &str = "The previous response could not be used:";

pub fn syntax_repair_message(err: &SourceError) -> String {
    format!("{SYNTAX_REPAIR_MARKER} {err}\nPlease correct the error and answer again in the same format.")
}

/// Calls the backend until `parse` accepts the response or `retry_limit`
/// attempts are spent. Every response and every repair request is appended
/// to `history`. `parse` sees the whole response text.
pub fn syntax_repair_loop<T>(
    backend: &dyn Backend,
    history: &mut History,
    parse: impl Fn(&str) -> Result<T, SourceError>,
    retry_limit: usize,
) -> Result<Repaired<T>, RepairError> {
    let mut errors = Vec::new();
    let mut calls = 0;
    while calls < retry_limit {
        let reply = backend.complete(history).map_err(|source| RepairError::Backend {
            source,
            calls: calls + 1,
        })?;
        calls += 1;
        let parsed = parse(&reply.content);
        history.push(reply);
        match parsed {
            Ok(value) => return Ok(Repaired { value, calls }),
            Err(e) => {
                if calls < retry_limit {
                    history.push(Message::user(syntax_repair_message(&e)));
                }
                errors.push(e);
            }
        }
    }
    Err(RepairError::Exhausted { errors, calls })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{extract_pddl_block, parse_action_form, read_one};

    fn parse_action(text: &str) -> Result<crate::pddl::ActionSchema, SourceError> {
        let block = extract_pddl_block(text)?;
        parse_action_form(&read_one(&block)?)
    }

    const GOOD: &str = "```pddl\n(:action noop :parameters () :precondition (and) :effect (and))\n```";

    fn start() -> History {
        let mut h = History::new("sys");
        h.push(Message::user("go"));
        h
    }

    #[test]
    fn repair_after_one_failure() {
        let b = ScriptedBackend::new(vec!["garbage".into(), GOOD.into()]);
        let mut h = start();
        let r = syntax_repair_loop(&b, &mut h, parse_action, 5).unwrap();
        assert_eq!(r.calls, 2);
        let repairs = h
            .messages()
            .iter()
            .filter(|m| m.content.starts_with(SYNTAX_REPAIR_MARKER))
            .count();
        assert_eq!(repairs, 1);
        assert_eq!(h.len(), 2 + 3);
    }

    #[test]
    fn exhaustion_carries_all_errors() {
        let b = ScriptedBackend::new(vec!["x".into(); 5]);
        let mut h = start();
        match syntax_repair_loop(&b, &mut h, parse_action, 5) {
            Err(RepairError::Exhausted { errors, calls }) => {
                assert_eq!(errors.len(), 5);
                assert_eq!(calls, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn first_valid_adds_no_repair_message() {
        let b = ScriptedBackend::new(vec![GOOD.into()]);
        let mut h = start();
        syntax_repair_loop(&b, &mut h, parse_action, 5).unwrap();
        assert_eq!(h.len(), 3);
    }
}
