//! Deterministic in-process stand-in for a hosted model. Chat replies are
//! template transforms of the prompt text; embeddings are sums of
//! hash-seeded Gaussian word vectors, normalized to unit length.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::client::{CallRecord, ChatMessage, LlmClient, Task};
use super::prompts::{payload, TopicBank};
use super::{LlmError, Result, DEFAULT_EMBEDDING_DIM};

type Rule = Box<dyn Fn(Task, &[ChatMessage]) -> Option<String> + Send + Sync>;

pub struct MockClient {
    dim: usize,
    echo: usize,
    topics: TopicBank,
    rules: Vec<Rule>,
    embeddings: HashMap<String, Vec<f64>>,
    fail_after: Option<usize>,
    log: Mutex<Vec<CallRecord>>,
}

impl Default for MockClient {
    fn default() -> Self {
        Self::new()
    }
}

const POSITIVE: [&str; 10] = ["beat", "beats", "growth", "gain", "gains", "record", "raise", "raises", "upgrade", "strong"];
const NEGATIVE: [&str; 10] = ["miss", "misses", "loss", "decline", "cut", "cuts", "downgrade", "weak", "lawsuit", "plunge"];

impl MockClient {
    pub fn new() -> Self {
        MockClient {
            dim: DEFAULT_EMBEDDING_DIM,
            echo: 1,
            topics: TopicBank::default(),
            rules: Vec::new(),
            embeddings: HashMap::new(),
            fail_after: None,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// Number of leading sentences echoed by the text-producing tasks.
    pub fn with_echo(mut self, sentences: usize) -> Self {
        self.echo = sentences.max(1);
        self
    }

    /// Keyword table used to answer topic questions.
    pub fn with_topics(mut self, topics: TopicBank) -> Self {
        self.topics = topics;
        self
    }

    /// A reply rule tried before the defaults; `None` falls through.
    pub fn with_rule<F>(mut self, f: F) -> Self
    where
        F: Fn(Task, &[ChatMessage]) -> Option<String> + Send + Sync + 'static,
    {
        self.rules.push(Box::new(f));
        self
    }

    /// Fixed embedding for an exact input text.
    pub fn with_embedding(mut self, text: &str, v: Vec<f64>) -> Self {
        self.embeddings.insert(text.to_string(), v);
        self
    }

    /// Every chat call after the first `n` fails with an upstream error.
    pub fn failing_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    pub fn chat_tasks(&self) -> Vec<Task> {
        self.calls()
            .into_iter()
            .filter_map(|c| match c {
                CallRecord::Chat { task, .. } => Some(task),
                CallRecord::Embed { .. } => None,
            })
            .collect()
    }

    pub fn count(&self, task: Task) -> usize {
        self.chat_tasks().iter().filter(|t| **t == task).count()
    }

    pub fn embed_count(&self) -> usize {
        self.calls().iter().filter(|c| matches!(c, CallRecord::Embed { .. })).count()
    }

    fn reply(&self, task: Task, messages: &[ChatMessage]) -> String {
        if let Some(r) = self.rules.iter().find_map(|r| r(task, messages)) {
            return r;
        }
        let content = messages.last().map_or("", |m| m.content.as_str());
        let text = payload(content);
        match task {
            Task::NewsSentiment => {
                let words = words(text);
                let pos = words.iter().filter(|w| POSITIVE.contains(&w.as_str())).count();
                let neg = words.iter().filter(|w| NEGATIVE.contains(&w.as_str())).count();
                match pos.cmp(&neg) {
                    std::cmp::Ordering::Greater => "positive",
                    std::cmp::Ordering::Less => "negative",
                    std::cmp::Ordering::Equal => "neutral",
                }
                .to_string()
            }
            Task::NewsTopic => {
                let name = content.lines().find_map(|l| l.strip_prefix("Topic: ")).unwrap_or("").trim();
                let words = words(text);
                let hit = self
                    .topics
                    .topics
                    .iter()
                    .find(|t| t.name == name)
                    .is_some_and(|t| t.keywords.iter().any(|k| words.contains(k)));
                if hit { "yes" } else { "no" }.to_string()
            }
            Task::AnswerQuestion if text.trim().is_empty() => "unanswerable".to_string(),
            _ => sentences(text).into_iter().take(self.echo).collect::<Vec<_>>().join(" "),
        }
    }
}

/// Lowercase alphanumeric tokens.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Splits after `.`, `!` or `?` followed by whitespace, and at line breaks.
pub fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let next_ws = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
        let end = match c {
            '\n' => Some(i),
            '.' | '!' | '?' if next_ws => Some(i + c.len_utf8()),
            _ => None,
        };
        if let Some(e) = end {
            let s = text[start..e].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = e;
        }
    }
    let s = text[start..].trim();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

fn seeded(bytes: &[u8]) -> ChaCha8Rng {
    let digest = Sha256::digest(bytes);
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

/// Unit-norm bag-of-words embedding: each distinct token contributes a
/// Gaussian vector drawn from a generator seeded by its SHA-256 digest.
pub fn hash_embedding(text: &str, dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let toks = words(text);
    let mut add = |rng: &mut ChaCha8Rng| {
        for x in v.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *x += z;
        }
    };
    if toks.is_empty() {
        add(&mut seeded(text.as_bytes()));
    }
    for t in &toks {
        add(&mut seeded(t.as_bytes()));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

impl LlmClient for MockClient {
    fn chat(&self, task: Task, messages: &[ChatMessage]) -> Result<String> {
        let mut log = self.log.lock().expect("mock log poisoned");
        let done = log.iter().filter(|c| matches!(c, CallRecord::Chat { .. })).count();
        let response = match self.fail_after {
            Some(n) if done >= n => Err(format!("mock failure on chat call {}", done + 1)),
            _ => Ok(self.reply(task, messages)),
        };
        log.push(CallRecord::Chat { task, messages: messages.to_vec(), response: response.clone() });
        response.map_err(LlmError::upstream)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let out = if text.trim().is_empty() {
            Err(LlmError::EmptyInput("cannot embed empty text".into()))
        } else if let Some(v) = self.embeddings.get(text) {
            Ok(v.clone())
        } else {
            Ok(hash_embedding(text, self.dim))
        };
        self.log.lock().expect("mock log poisoned").push(CallRecord::Embed {
            input: text.to_string(),
            dim: out.as_ref().map(Vec::len).map_err(|e| e.to_string()),
        });
        out
    }
}
