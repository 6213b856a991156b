//! Blocking HTTP client for the chat/embedding contract:
//! `POST {base}/chat {model, temperature, messages}` returns `{content}`, and
//! `POST {base}/embeddings {model, input}` returns `{embedding}`.

use std::sync::Mutex;
use std::thread::sleep;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::client::{ChatMessage, LlmClient, Task};
use super::{LlmError, Result};

pub const API_KEY_ENV: &str = "RISKLABS_LLM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatClientConfig {
    pub base_url: String,
    pub model: String,
    pub embedding_model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// Minimum spacing between requests.
    pub min_interval_ms: u64,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        ChatClientConfig {
            base_url: "http://127.0.0.1:8080".into(),
            model: "gpt-4".into(),
            embedding_model: "text-embedding".into(),
            temperature: 0.0,
            timeout_secs: 60,
            max_retries: 3,
            min_interval_ms: 0,
            api_key_env: API_KEY_ENV.into(),
        }
    }
}

impl ChatClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temperature != 0.0 {
            return Err(LlmError::Config(format!("temperature must be 0, got {}", self.temperature)));
        }
        if self.max_retries > 10 {
            return Err(LlmError::Config("max_retries above 10".into()));
        }
        if self.base_url.trim().is_empty() || self.model.trim().is_empty() {
            return Err(LlmError::Config("base_url and model are required".into()));
        }
        Ok(())
    }
}

pub struct HttpClient {
    config: ChatClientConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    last: Mutex<Option<Instant>>,
}

#[derive(Deserialize)]
struct ChatReply {
    content: String,
}

#[derive(Deserialize)]
struct EmbedReply {
    embedding: Vec<f32>,
}

impl HttpClient {
    /// Reads the bearer token from the configured environment variable.
    pub fn new(config: ChatClientConfig) -> Result<Self> {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_api_key(config, key)
    }

    pub fn with_api_key(config: ChatClientConfig, api_key: Option<String>) -> Result<Self> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpClient { config, agent, api_key, last: Mutex::new(None) })
    }

    fn throttle(&self) {
        let gap = Duration::from_millis(self.config.min_interval_ms);
        let mut last = self.last.lock().expect("rate limiter poisoned");
        if let Some(t) = *last {
            let since = t.elapsed();
            if since < gap {
                sleep(gap - since);
            }
        }
        *last = Some(Instant::now());
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: serde_json::Value) -> Result<T> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut last_err = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                sleep(Duration::from_millis(100 << (attempt - 1).min(6)));
            }
            self.throttle();
            let mut req = self.agent.post(&url);
            if let Some(k) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            match req.send_json(&body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 429 || status >= 500 {
                        last_err = format!("HTTP {status} from {url}");
                        continue;
                    }
                    if status >= 400 {
                        return Err(LlmError::upstream(format!("HTTP {status} from {url}")));
                    }
                    return resp
                        .body_mut()
                        .read_json::<T>()
                        .map_err(|e| LlmError::Protocol(format!("bad response from {url}: {e}")));
                }
                Err(e) => last_err = format!("{url}: {e}"),
            }
        }
        Err(LlmError::upstream(format!(
            "{last_err} after {} attempt(s)",
            self.config.max_retries + 1
        )))
    }
}

impl LlmClient for HttpClient {
    fn chat(&self, _task: Task, messages: &[ChatMessage]) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        });
        Ok(self.post::<ChatReply>("chat", body)?.content)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let body = json!({ "model": self.config.embedding_model, "input": text });
        Ok(self.post::<EmbedReply>("embeddings", body)?.embedding.into_iter().map(f64::from).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rules() {
        assert!(ChatClientConfig::default().validate().is_ok());
        assert!(ChatClientConfig { temperature: 0.7, ..Default::default() }.validate().is_err());
        assert!(ChatClientConfig { max_retries: 50, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn unreachable_endpoint_is_upstream_error() {
        let cfg = ChatClientConfig {
            base_url: "http://127.0.0.1:9".into(),
            max_retries: 1,
            timeout_secs: 2,
            ..Default::default()
        };
        let c = HttpClient::with_api_key(cfg, None).unwrap();
        assert!(matches!(c.chat(Task::SummarizeChunk, &[ChatMessage::user("x")]), Err(LlmError::Upstream { .. })));
    }
}
