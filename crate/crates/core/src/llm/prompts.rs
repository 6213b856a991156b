//! Prompt templates and the default question and topic banks. Templates are
//! text assets with `{name}` placeholders; the text under analysis always
//! follows a `TEXT:` line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::client::{ChatMessage, Task};
use super::{LlmError, Result};

pub const PROMPT_VERSION: u32 = 1;
pub const TEXT_MARKER: &str = "\nTEXT:\n";

pub const SYSTEM: &str = include_str!("prompts/system.v1.txt");
const SUMMARIZE_CHUNK: &str = include_str!("prompts/summarize_chunk.v1.txt");
const SUMMARIZE_FINAL: &str = include_str!("prompts/summarize_final.v1.txt");
const COMPRESS_CONTEXT: &str = include_str!("prompts/compress_context.v1.txt");
const ANSWER_QUESTION: &str = include_str!("prompts/answer_question.v1.txt");
const NEWS_SENTIMENT: &str = include_str!("prompts/news_sentiment.v1.txt");
const NEWS_TOPIC: &str = include_str!("prompts/news_topic.v1.txt");
const NEWS_MARKET_RESPONSE: &str = include_str!("prompts/news_market_response.v1.txt");
const NEWS_FEATURE: &str = include_str!("prompts/news_feature.v1.txt");
const QUESTIONS: &str = include_str!("prompts/questions.v1.txt");
const TOPICS: &str = include_str!("prompts/topics.v1.txt");

pub fn template(task: Task) -> &'static str {
    match task {
        Task::SummarizeChunk => SUMMARIZE_CHUNK,
        Task::SummarizeFinal => SUMMARIZE_FINAL,
        Task::CompressContext => COMPRESS_CONTEXT,
        Task::AnswerQuestion => ANSWER_QUESTION,
        Task::NewsSentiment => NEWS_SENTIMENT,
        Task::NewsTopic => NEWS_TOPIC,
        Task::NewsMarketResponse => NEWS_MARKET_RESPONSE,
        Task::NewsFeature => NEWS_FEATURE,
    }
}

/// Substitutes `{name}` placeholders in one pass, so braces inside the
/// values are left alone. Unknown placeholders are an error.
pub fn render(template: &str, vars: &[(&str, &str)]) -> Result<String> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or_else(|| LlmError::Config("unclosed placeholder".into()))?;
        let name = &after[..close];
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .ok_or_else(|| LlmError::Config(format!("no value for placeholder {{{name}}}")))?;
        out.push_str(value.1);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out.trim_end().to_string())
}

/// System and user messages for one task.
pub fn messages(task: Task, vars: &[(&str, &str)]) -> Result<Vec<ChatMessage>> {
    Ok(vec![ChatMessage::system(SYSTEM.trim_end()), ChatMessage::user(render(template(task), vars)?)])
}

/// The text after the `TEXT:` marker of a rendered prompt.
pub fn payload(content: &str) -> &str {
    content.rfind(TEXT_MARKER).map_or(content, |i| &content[i + TEXT_MARKER.len()..])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionBank {
    pub questions: Vec<String>,
}

impl Default for QuestionBank {
    fn default() -> Self {
        Self::parse(QUESTIONS).expect("bundled question bank is valid")
    }
}

impl QuestionBank {
    /// One question per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let questions: Vec<String> = content_lines(text).map(str::to_string).collect();
        if questions.is_empty() {
            return Err(LlmError::EmptyInput("question bank has no questions".into()));
        }
        Ok(QuestionBank { questions })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub question: String,
    /// Only consulted by the offline mock.
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicBank {
    pub topics: Vec<Topic>,
}

impl Default for TopicBank {
    fn default() -> Self {
        Self::parse(TOPICS).expect("bundled topic bank is valid")
    }
}

impl TopicBank {
    /// Lines of `name|question|kw1,kw2,...`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut topics = Vec::new();
        for line in content_lines(text) {
            let parts: Vec<&str> = line.split('|').map(str::trim).collect();
            if parts.len() != 3 || parts[0].is_empty() || parts[1].is_empty() {
                return Err(LlmError::Config(format!("bad topic line {line:?}")));
            }
            topics.push(Topic {
                name: parts[0].to_string(),
                question: parts[1].to_string(),
                keywords: parts[2].split(',').map(|k| k.trim().to_lowercase()).filter(|k| !k.is_empty()).collect(),
            });
        }
        if topics.is_empty() {
            return Err(LlmError::EmptyInput("topic bank has no topics".into()));
        }
        Ok(TopicBank { topics })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Matching answers needed to pass the retrieval filter: half the
    /// topics, rounded up.
    pub fn min_matches(&self) -> usize {
        self.topics.len().div_ceil(2)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}
