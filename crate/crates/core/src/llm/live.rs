use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{approx_context_tokens, approx_tokens, ChatExchange, ChatProvider, Message, ProviderKind, Role};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveSettings {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: f64,
}

fn default_key_env() -> String {
    "HEURGEN_API_KEY".to_string()
}

fn default_timeout() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    /// Sleep before each retry; the number of attempts is `delays.len() + 1`.
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            delays: [1, 4, 16].map(Duration::from_secs).to_vec(),
        }
    }
}

/// Chat-completions over HTTP.
pub struct LiveProvider {
    settings: LiveSettings,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl LiveProvider {
    pub fn new(settings: LiveSettings) -> Self {
        let api_key = std::env::var(&settings.api_key_env).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(settings.timeout_seconds)))
            .build()
            .into();
        LiveProvider {
            settings,
            api_key,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'))
    }

    fn request_once(&self, body: &Value) -> std::result::Result<Value, String> {
        let mut req = self.agent.post(&self.endpoint());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| format!("malformed response body: {e}"))
    }
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
    }
}

impl ChatProvider for LiveProvider {
    fn complete(&self, messages: &[Message], temperature: f64, digest: &str) -> Result<ChatExchange> {
        let body = json!({
            "model": self.settings.model,
            "temperature": temperature,
            "messages": messages
                .iter()
                .map(|m| json!({"role": role_name(m.role), "content": m.text}))
                .collect::<Vec<_>>(),
        });
        let mut last_err = String::new();
        for attempt in 0..=self.retry.delays.len() {
            if attempt > 0 {
                let delay = self.retry.delays[attempt - 1];
                log::warn!("chat request failed ({last_err}); retrying in {delay:?}");
                std::thread::sleep(delay);
            }
            let value = match self.request_once(&body) {
                Ok(v) => v,
                Err(e) => {
                    last_err = e;
                    continue;
                }
            };
            let Some(response) = value["choices"][0]["message"]["content"].as_str() else {
                last_err = "response has no choices[0].message.content".into();
                continue;
            };
            let usage = &value["usage"];
            return Ok(ChatExchange {
                messages: messages.to_vec(),
                temperature,
                response: response.to_string(),
                context_tokens: usage["prompt_tokens"]
                    .as_u64()
                    .unwrap_or_else(|| approx_context_tokens(messages)),
                generation_tokens: usage["completion_tokens"]
                    .as_u64()
                    .unwrap_or_else(|| approx_tokens(response)),
                provider: ProviderKind::Live,
                prompt_digest: digest.to_string(),
            });
        }
        Err(Error::Provider(format!(
            "{} failed after {} attempts: {last_err}",
            self.endpoint(),
            self.retry.delays.len() + 1
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `statuses.len()` requests, replying with each status in turn.
    fn serve(statuses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in statuses {
                let (stream, _) = listener.accept().unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                }
                let mut req_body = vec![0u8; len];
                reader.read_exact(&mut req_body).unwrap();
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, hits)
    }

    fn provider(url: String) -> LiveProvider {
        LiveProvider::new(LiveSettings {
            base_url: url,
            model: "test-model".into(),
            api_key_env: "HEURGEN_TEST_UNSET_KEY".into(),
            timeout_seconds: 5.0,
        })
        .with_retry(RetryPolicy {
            delays: vec![Duration::from_millis(5); 3],
        })
    }

    const OK_BODY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello there"}}],"usage":{"prompt_tokens":11,"completion_tokens":2}}"#;

    #[test]
    fn parses_content_and_usage_after_transient_failure() {
        let (url, hits) = serve(vec![(500, "{}".into()), (200, OK_BODY.into())]);
        let x = provider(url)
            .complete(&[Message::user("hi")], 1.0, "d")
            .unwrap();
        assert_eq!(x.response, "hello there");
        assert_eq!((x.context_tokens, x.generation_tokens), (11, 2));
        assert_eq!(x.provider, ProviderKind::Live);
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn missing_usage_falls_back_to_word_count() {
        let body = r#"{"choices":[{"message":{"content":"a b c"}}]}"#;
        let (url, _) = serve(vec![(200, body.into())]);
        let x = provider(url)
            .complete(&[Message::user("one two")], 1.0, "d")
            .unwrap();
        assert_eq!((x.context_tokens, x.generation_tokens), (2, 3));
    }

    #[test]
    fn gives_up_after_bounded_retries() {
        let (url, hits) = serve(vec![(503, "{}".into()); 4]);
        let err = provider(url)
            .complete(&[Message::user("hi")], 1.0, "d")
            .unwrap_err();
        assert!(matches!(err, Error::Provider(ref m) if m.contains("4 attempts")), "{err}");
        assert_eq!(hits.load(Ordering::SeqCst), 4);
    }
}
