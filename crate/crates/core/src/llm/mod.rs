//! Clients and pipelines for earnings-call analysis and news enrichment over
//! a generic chat-completion and embedding contract. [`MockClient`] makes
//! every pipeline runnable offline and deterministically.

pub mod chunk;
pub mod client;
pub mod http;
pub mod mock;
pub mod news;
pub mod pipeline;
pub mod prompts;
pub mod qa;
pub mod summarize;

pub use chunk::{chunk_transcript, Chunk, Transcript};
pub use client::{AuditedClient, CallRecord, ChatMessage, LlmClient, Task};
pub use http::{ChatClientConfig, HttpClient};
pub use mock::MockClient;
pub use news::{
    encode_news_feature, enrich_news, find_similar_news, read_news_jsonl, group_news, NewsFeature, NewsGroup, NewsItem, NewsMetadata, Sentiment,
    SimilarNews,
};
pub use pipeline::{analyze, AnalysisInputs, AnalysisOutput, PipelineConfig};
pub use prompts::{QuestionBank, Topic, TopicBank};
pub use qa::{answer_questions, QuestionAnswer, QuestionAnswers};
pub use summarize::{embed_text, hierarchical_summarize, Summaries};

use thiserror::Error;

pub const DEFAULT_EMBEDDING_DIM: usize = 1024;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("upstream error: {message} ({} step(s) completed)", partial.len())]
    Upstream { message: String, partial: Vec<String> },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("sentence {index} has {len} characters, over the chunk budget of {budget}")]
    OversizedSentence { index: usize, len: usize, budget: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LlmError {
    pub(crate) fn upstream(message: impl Into<String>) -> Self {
        LlmError::Upstream { message: message.into(), partial: Vec::new() }
    }

    /// Attaches the outputs finished before an upstream failure.
    pub(crate) fn with_partial(self, done: &[String]) -> Self {
        match self {
            LlmError::Upstream { message, .. } => LlmError::Upstream { message, partial: done.to_vec() },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, LlmError>;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 0.0], &[2.0, 0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[-1.0, -1.0]) + 1.0).abs() < 1e-15);
    }
}
