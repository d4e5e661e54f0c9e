use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest};
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Substring,
}

/// One line of a rule file:
/// `{"match_kind": "exact"|"substring", "match": "...", "response": "...", "priority": 0}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedRule {
    pub match_kind: MatchKind,
    #[serde(rename = "match")]
    pub pattern: String,
    pub response: String,
    #[serde(default)]
    pub priority: i64,
}

impl ScriptedRule {
    pub fn exact(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        ScriptedRule {
            match_kind: MatchKind::Exact,
            pattern: pattern.into(),
            response: response.into(),
            priority: 0,
        }
    }

    pub fn substring(
        pattern: impl Into<String>,
        response: impl Into<String>,
        priority: i64,
    ) -> Self {
        ScriptedRule {
            match_kind: MatchKind::Substring,
            pattern: pattern.into(),
            response: response.into(),
            priority,
        }
    }

    fn matches(&self, prompt: &str) -> bool {
        match self.match_kind {
            MatchKind::Exact => self.pattern == prompt,
            MatchKind::Substring => prompt.contains(&self.pattern),
        }
    }
}

/// Replays canned answers keyed on the last user message.
///
/// Resolution: exact rules beat substring rules; within a kind the highest
/// priority wins and ties go to the earliest rule in file order.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>) -> Result<Self, Error> {
        if let Some((i, _)) = rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.response.trim().is_empty())
        {
            return Err(Error::Config(format!(
                "scripted rule {} has an empty response",
                i + 1
            )));
        }
        Ok(ScriptedBackend {
            rules,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, Error> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rule: ScriptedRule = serde_json::from_str(line)
                .map_err(|e| Error::json(format!("rule line {}", i + 1), e))?;
            rules.push(rule);
        }
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    pub fn rules(&self) -> &[ScriptedRule] {
        &self.rules
    }

    /// Number of `complete` calls served so far, including failed lookups.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn lookup(&self, prompt: &str) -> Option<&ScriptedRule> {
        let best = |kind: MatchKind| {
            self.rules
                .iter()
                .filter(|r| r.match_kind == kind && r.matches(prompt))
                // max_by_key keeps the last maximum; reverse so file order breaks ties
                .rev()
                .max_by_key(|r| r.priority)
        };
        best(MatchKind::Exact).or_else(|| best(MatchKind::Substring))
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = request.last_user_message();
        self.lookup(prompt)
            .map(|r| r.response.trim().to_string())
            .ok_or_else(|| BackendError::NoRule {
                prompt: prompt.to_string(),
            })
    }
}
