use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{approx_context_tokens, approx_tokens, ChatExchange, ChatProvider, Message, ProviderKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Any,
    Digest,
    #[default]
    Substring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockEntry {
    #[serde(default)]
    pub matcher: Matcher,
    #[serde(default)]
    pub pattern: String,
    pub response: String,
    #[serde(default)]
    pub context_tokens: Option<u64>,
    #[serde(default)]
    pub generation_tokens: Option<u64>,
}

impl MockEntry {
    pub fn substring(pattern: impl Into<String>, response: impl Into<String>) -> Self {
        MockEntry {
            matcher: Matcher::Substring,
            pattern: pattern.into(),
            response: response.into(),
            context_tokens: None,
            generation_tokens: None,
        }
    }

    pub fn any(response: impl Into<String>) -> Self {
        MockEntry {
            matcher: Matcher::Any,
            pattern: String::new(),
            response: response.into(),
            context_tokens: None,
            generation_tokens: None,
        }
    }

    pub fn with_tokens(mut self, context: u64, generation: u64) -> Self {
        self.context_tokens = Some(context);
        self.generation_tokens = Some(generation);
        self
    }

    fn matches(&self, prompt_text: &str, digest: &str) -> bool {
        match self.matcher {
            Matcher::Any => true,
            Matcher::Digest => self.pattern == digest,
            Matcher::Substring => prompt_text.contains(&self.pattern),
        }
    }
}

/// Ordered canned responses. Entries sharing a (matcher, pattern) form a
/// group that is served round-robin.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(rename = "entry", default)]
    pub entries: Vec<MockEntry>,
    #[serde(skip)]
    cursors: BTreeMap<(Matcher, String), usize>,
}

impl MockScript {
    pub fn new(entries: Vec<MockEntry>) -> Self {
        MockScript {
            entries,
            cursors: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, entry: MockEntry) {
        self.entries.push(entry);
    }

    /// Loads a script from a TOML file with `[[entry]]` tables.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn next_response(&mut self, prompt_text: &str, digest: &str) -> Option<&MockEntry> {
        let first = self.entries.iter().find(|e| e.matches(prompt_text, digest))?;
        let key = (first.matcher, first.pattern.clone());
        let group: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.matcher == key.0 && e.pattern == key.1)
            .map(|(i, _)| i)
            .collect();
        let cursor = self.cursors.entry(key).or_insert(0);
        let idx = group[*cursor % group.len()];
        *cursor += 1;
        Some(&self.entries[idx])
    }
}

pub struct MockProvider {
    script: Mutex<MockScript>,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        MockProvider {
            script: Mutex::new(script),
        }
    }
}

impl ChatProvider for MockProvider {
    fn complete(&self, messages: &[Message], temperature: f64, digest: &str) -> Result<ChatExchange> {
        let prompt_text: String = messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let mut script = self.script.lock().unwrap();
        let entry = script
            .next_response(&prompt_text, digest)
            .ok_or_else(|| Error::MockExhausted(digest.to_string()))?;
        Ok(ChatExchange {
            messages: messages.to_vec(),
            temperature,
            response: entry.response.clone(),
            context_tokens: entry
                .context_tokens
                .unwrap_or_else(|| approx_context_tokens(messages)),
            generation_tokens: entry
                .generation_tokens
                .unwrap_or_else(|| approx_tokens(&entry.response)),
            provider: ProviderKind::Mock,
            prompt_digest: digest.to_string(),
        })
    }
}
