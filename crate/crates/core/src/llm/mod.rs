//! Chat-completion gateway over live, record/replay and scripted mock providers.

pub mod corpus;
mod live;
mod mock;
mod prompter;
mod replay;
mod template;
mod usage;

use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use live::{LiveProvider, LiveSettings, RetryPolicy};
pub use mock::{Matcher, MockEntry, MockProvider, MockScript};
pub use prompter::{format_fitness, Prompter};
pub use replay::{CacheMode, ReplayCache};
pub use template::{Bindings, TemplateStore, TEMPLATE_IDS};
pub use usage::{usage_totals, UsageTotals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn system(text: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            text: text.into(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Live,
    Replay,
    Mock,
}

/// One prompt/response pair with token usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub response: String,
    pub context_tokens: u64,
    pub generation_tokens: u64,
    pub provider: ProviderKind,
    pub prompt_digest: String,
}

/// Token usage of one exchange, as recorded in the journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeUsage {
    pub prompt_digest: String,
    pub context_tokens: u64,
    pub generation_tokens: u64,
    pub provider: ProviderKind,
}

impl From<&ChatExchange> for ExchangeUsage {
    fn from(x: &ChatExchange) -> Self {
        ExchangeUsage {
            prompt_digest: x.prompt_digest.clone(),
            context_tokens: x.context_tokens,
            generation_tokens: x.generation_tokens,
            provider: x.provider,
        }
    }
}

/// Stable SHA-256 over the message list and temperature.
pub fn prompt_digest(messages: &[Message], temperature: f64) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        messages: &'a [Message],
        temperature: f64,
    }
    let text = serde_json::to_string(&Key {
        messages,
        temperature,
    })
    .expect("messages serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Token estimate used when a provider reports no usage: one token per
/// whitespace-separated word.
pub fn approx_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn approx_context_tokens(messages: &[Message]) -> u64 {
    messages.iter().map(|m| approx_tokens(&m.text)).sum()
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[Message], temperature: f64, digest: &str)
        -> Result<ChatExchange>;
}

/// Entry point for all prompting. Keeps running token totals.
pub struct LlmGateway {
    provider: Box<dyn ChatProvider>,
    totals: Mutex<UsageTotals>,
}

impl LlmGateway {
    pub fn new(provider: Box<dyn ChatProvider>) -> Self {
        LlmGateway {
            provider,
            totals: Mutex::new(UsageTotals::default()),
        }
    }

    pub fn complete_chat(&self, messages: &[Message], temperature: f64) -> Result<ChatExchange> {
        if messages.is_empty() {
            return Err(Error::Precondition("complete_chat: empty message list".into()));
        }
        let digest = prompt_digest(messages, temperature);
        let exchange = self.provider.complete(messages, temperature, &digest)?;
        self.totals.lock().unwrap().add(&ExchangeUsage::from(&exchange));
        Ok(exchange)
    }

    pub fn totals(&self) -> UsageTotals {
        *self.totals.lock().unwrap()
    }
}

/// Extracts the first fenced code block from a response.
pub fn extract_code_block(response: &str) -> Option<String> {
    let start = response.find("```")?;
    let after = &response[start + 3..];
    // Skip the optional language tag on the opening fence line.
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    let code = body[..end].trim_end_matches(['\n', '\r', ' ']).to_string();
    if code.trim().is_empty() {
        None
    } else {
        Some(code)
    }
}
