use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::client::{LlmClient, Task};
use super::prompts::messages;
use super::{LlmError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summaries {
    pub chunk_summaries: Vec<String>,
    pub summary: String,
}

impl Summaries {
    /// Chunk summaries followed by the overall summary, one per line; the
    /// input to the summary embedding.
    pub fn embedding_text(&self) -> String {
        let mut parts = self.chunk_summaries.clone();
        parts.push(self.summary.clone());
        parts.join("\n")
    }
}

/// One chat call per chunk, then one over the joined chunk summaries.
pub fn hierarchical_summarize<C: LlmClient + ?Sized>(
    ticker: &str,
    date: NaiveDate,
    chunks: &[Chunk],
    client: &C,
) -> Result<Summaries> {
    if chunks.is_empty() {
        return Err(LlmError::EmptyInput("nothing to summarize".into()));
    }
    let date = date.to_string();
    let mut chunk_summaries = Vec::with_capacity(chunks.len());
    for c in chunks {
        let text = c.text();
        let msgs = messages(Task::SummarizeChunk, &[("ticker", ticker), ("date", &date), ("text", &text)])?;
        let s = client.chat(Task::SummarizeChunk, &msgs).map_err(|e| e.with_partial(&chunk_summaries))?;
        chunk_summaries.push(s);
    }
    let joined = chunk_summaries.join("\n");
    let msgs = messages(Task::SummarizeFinal, &[("ticker", ticker), ("date", &date), ("text", &joined)])?;
    let summary = client.chat(Task::SummarizeFinal, &msgs).map_err(|e| e.with_partial(&chunk_summaries))?;
    Ok(Summaries { chunk_summaries, summary })
}

pub fn embed_text<C: LlmClient + ?Sized>(text: &str, client: &C) -> Result<Vec<f64>> {
    if text.trim().is_empty() {
        return Err(LlmError::EmptyInput("cannot embed empty text".into()));
    }
    let v = client.embed(text)?;
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        return Err(LlmError::Protocol("embedding is empty or non-finite".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::chunk::{chunk_transcript, Transcript};
    use crate::llm::mock::MockClient;

    fn chunks(n: usize) -> Vec<Chunk> {
        let t = Transcript {
            ticker: "AAA".into(),
            date: NaiveDate::from_ymd_opt(2021, 4, 27).unwrap(),
            sentences: (0..n).map(|i| format!("Sentence number {i} of the call.")).collect(),
        };
        chunk_transcript(&t, 70).unwrap()
    }

    #[test]
    fn call_accounting() {
        for n in [1, 2, 5, 9] {
            let c = chunks(n);
            let m = MockClient::new();
            let s = hierarchical_summarize("AAA", NaiveDate::from_ymd_opt(2021, 4, 27).unwrap(), &c, &m).unwrap();
            assert_eq!(m.chat_tasks().len(), c.len() + 1);
            assert_eq!(m.chat_tasks().last(), Some(&Task::SummarizeFinal));
            assert_eq!(s.chunk_summaries.len(), c.len());
        }
    }

    #[test]
    fn echo_snapshot() {
        let c = chunks(4);
        assert_eq!(c.len(), 2);
        let m = MockClient::new();
        let s = hierarchical_summarize("AAA", NaiveDate::from_ymd_opt(2021, 4, 27).unwrap(), &c, &m).unwrap();
        assert_eq!(s.chunk_summaries, vec!["Sentence number 0 of the call.", "Sentence number 2 of the call."]);
        assert_eq!(s.summary, "Sentence number 0 of the call.");
        assert_eq!(
            s.embedding_text(),
            "Sentence number 0 of the call.\nSentence number 2 of the call.\nSentence number 0 of the call."
        );
    }

    #[test]
    fn upstream_failure_keeps_partial_progress() {
        let c = chunks(9);
        let m = MockClient::new().failing_after(2);
        match hierarchical_summarize("AAA", NaiveDate::from_ymd_opt(2021, 4, 27).unwrap(), &c, &m) {
            Err(LlmError::Upstream { partial, .. }) => assert_eq!(partial.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embed_contract() {
        let m = MockClient::new();
        assert_eq!(embed_text("same", &m).unwrap(), embed_text("same", &m).unwrap());
        assert!(matches!(embed_text("", &m), Err(LlmError::EmptyInput(_))));
    }
}
