//! Scripted chat backend for deterministic tests and dry runs.

use std::collections::VecDeque;
use std::sync::Mutex;

use async_trait::async_trait;

use super::{AttemptError, ChatBackend, EndpointConfig, GatewayError, Message, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockFailure {
    Timeout,
    RateLimited,
    Server(u16),
    Unreachable,
    Auth,
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockOutcome {
    Reply(String),
    Fail(MockFailure),
}

impl From<&str> for MockOutcome {
    fn from(text: &str) -> Self {
        MockOutcome::Reply(text.to_string())
    }
}

impl From<String> for MockOutcome {
    fn from(text: String) -> Self {
        MockOutcome::Reply(text)
    }
}

impl MockOutcome {
    fn into_result(self) -> Result<String, AttemptError> {
        match self {
            MockOutcome::Reply(text) => Ok(text),
            MockOutcome::Fail(f) => Err(match f {
                MockFailure::Timeout => AttemptError::Timeout,
                MockFailure::RateLimited => AttemptError::RateLimited,
                MockFailure::Server(code) => AttemptError::Server(code),
                MockFailure::Unreachable => AttemptError::Connection("mock unreachable".into()),
                MockFailure::Auth => AttemptError::Auth("mock rejected credentials".into()),
                MockFailure::Malformed => AttemptError::Malformed("mock malformed body".into()),
            }),
        }
    }
}

#[derive(Debug)]
struct Rule {
    /// Substring of the last user message; `None` matches everything.
    pattern: Option<String>,
    outcomes: VecDeque<MockOutcome>,
    repeat: bool,
}

/// Replays canned outcomes. Rules are tried in order and the first whose
/// pattern occurs in the last user message answers; a rule that runs out
/// of outcomes reports the script as exhausted.
#[derive(Debug)]
pub struct MockBackend {
    rules: Mutex<Vec<Rule>>,
    calls: Mutex<Vec<Vec<Message>>>,
}

impl MockBackend {
    /// Plain ordered replay of `script`.
    pub fn from_script(script: Vec<MockOutcome>) -> Result<Self, GatewayError> {
        MockBackend::builder().fallback(script).build()
    }

    pub fn builder() -> MockBuilder {
        MockBuilder::default()
    }

    /// Every message list received so far, in arrival order.
    pub fn calls(&self) -> Vec<Vec<Message>> {
        self.calls.lock().expect("calls lock").clone()
    }

    fn next(&self, messages: &[Message]) -> Result<String, AttemptError> {
        let last_user = messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("");
        let mut rules = self.rules.lock().expect("rules lock");
        let rule = rules
            .iter_mut()
            .find(|r| r.pattern.as_deref().is_none_or(|p| last_user.contains(p)))
            .ok_or(AttemptError::ScriptExhausted)?;
        let outcome = if rule.repeat {
            rule.outcomes.front().cloned()
        } else {
            rule.outcomes.pop_front()
        };
        outcome.ok_or(AttemptError::ScriptExhausted)?.into_result()
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn send(
        &self,
        _config: &EndpointConfig,
        messages: &[Message],
    ) -> Result<String, AttemptError> {
        self.calls.lock().expect("calls lock").push(messages.to_vec());
        tokio::task::yield_now().await;
        self.next(messages)
    }
}

#[derive(Debug, Default)]
pub struct MockBuilder {
    rules: Vec<Rule>,
    fallback: Option<Rule>,
}

impl MockBuilder {
    /// Answer calls whose last user message contains `pattern`, in order.
    pub fn on(mut self, pattern: &str, outcomes: Vec<MockOutcome>) -> Self {
        self.rules.push(Rule {
            pattern: Some(pattern.to_string()),
            outcomes: outcomes.into(),
            repeat: false,
        });
        self
    }

    /// Answer every call containing `pattern` with the same outcome.
    pub fn on_repeat(mut self, pattern: &str, outcome: impl Into<MockOutcome>) -> Self {
        self.rules.push(Rule {
            pattern: Some(pattern.to_string()),
            outcomes: VecDeque::from([outcome.into()]),
            repeat: true,
        });
        self
    }

    /// Outcomes for calls no pattern rule matched, in order.
    pub fn fallback(mut self, outcomes: Vec<MockOutcome>) -> Self {
        self.fallback = Some(Rule { pattern: None, outcomes: outcomes.into(), repeat: false });
        self
    }

    pub fn fallback_repeat(mut self, outcome: impl Into<MockOutcome>) -> Self {
        self.fallback = Some(Rule {
            pattern: None,
            outcomes: VecDeque::from([outcome.into()]),
            repeat: true,
        });
        self
    }

    pub fn build(mut self) -> Result<MockBackend, GatewayError> {
        self.rules.extend(self.fallback);
        if self.rules.iter().all(|r| r.outcomes.is_empty()) {
            return Err(GatewayError::EmptyScript);
        }
        Ok(MockBackend {
            rules: Mutex::new(self.rules),
            calls: Mutex::new(Vec::new()),
        })
    }
}
