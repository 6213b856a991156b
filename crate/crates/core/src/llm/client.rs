use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

/// Which prompt a chat call comes from. Not sent upstream; used for logs
/// and by the mock to pick a response rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    SummarizeChunk,
    SummarizeFinal,
    CompressContext,
    AnswerQuestion,
    NewsSentiment,
    NewsTopic,
    NewsMarketResponse,
    NewsFeature,
}

/// Chat completion (temperature 0) plus text embedding.
pub trait LlmClient: Send + Sync {
    fn chat(&self, task: Task, messages: &[ChatMessage]) -> Result<String>;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

impl<C: LlmClient + ?Sized> LlmClient for &C {
    fn chat(&self, task: Task, messages: &[ChatMessage]) -> Result<String> {
        (**self).chat(task, messages)
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        (**self).embed(text)
    }
}

/// One line of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CallRecord {
    Chat { task: Task, messages: Vec<ChatMessage>, response: std::result::Result<String, String> },
    Embed { input: String, dim: std::result::Result<usize, String> },
}

/// Appends every request and response to a JSONL file.
pub struct AuditedClient<C> {
    inner: C,
    log: Mutex<File>,
}

impl<C: LlmClient> AuditedClient<C> {
    pub fn new(inner: C, path: &Path) -> Result<Self> {
        let log = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditedClient { inner, log: Mutex::new(log) })
    }

    fn write(&self, rec: &CallRecord) -> Result<()> {
        let mut line = serde_json::to_string(rec)?;
        line.push('\n');
        self.log.lock().expect("audit log poisoned").write_all(line.as_bytes())?;
        Ok(())
    }
}

impl<C: LlmClient> LlmClient for AuditedClient<C> {
    fn chat(&self, task: Task, messages: &[ChatMessage]) -> Result<String> {
        let out = self.inner.chat(task, messages);
        self.write(&CallRecord::Chat {
            task,
            messages: messages.to_vec(),
            response: out.as_ref().map(Clone::clone).map_err(|e| e.to_string()),
        })?;
        out
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let out = self.inner.embed(text);
        self.write(&CallRecord::Embed {
            input: text.to_string(),
            dim: out.as_ref().map(Vec::len).map_err(|e| e.to_string()),
        })?;
        out
    }
}
