use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{LlmError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub ticker: String,
    pub date: NaiveDate,
    pub sentences: Vec<String>,
}

impl Transcript {
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(LlmError::EmptyInput(format!("{} {} transcript has no sentences", self.ticker, self.date)));
        }
        Ok(())
    }
}

/// A run of whole consecutive sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub index: usize,
    /// Index of the first sentence in the transcript.
    pub start: usize,
    pub sentences: Vec<String>,
    pub budget: usize,
}

impl Chunk {
    /// Sentences joined by single spaces.
    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }

    pub fn chars(&self) -> usize {
        joined_len(&self.sentences)
    }
}

fn joined_len(s: &[String]) -> usize {
    s.iter().map(|x| x.chars().count()).sum::<usize>() + s.len().saturating_sub(1)
}

/// Greedy packing: each chunk takes sentences until the next one would push
/// its joined length past `budget` characters.
pub fn chunk_transcript(t: &Transcript, budget: usize) -> Result<Vec<Chunk>> {
    t.validate()?;
    let mut chunks: Vec<Chunk> = Vec::new();
    let mut cur: Vec<String> = Vec::new();
    let mut cur_len = 0;
    let mut start = 0;
    for (i, s) in t.sentences.iter().enumerate() {
        let len = s.chars().count();
        if len > budget {
            return Err(LlmError::OversizedSentence { index: i, len, budget });
        }
        let grown = if cur.is_empty() { len } else { cur_len + 1 + len };
        if grown > budget {
            chunks.push(Chunk { index: chunks.len(), start, sentences: std::mem::take(&mut cur), budget });
            start = i;
            cur_len = len;
        } else {
            cur_len = grown;
        }
        cur.push(s.clone());
    }
    chunks.push(Chunk { index: chunks.len(), start, sentences: cur, budget });
    Ok(chunks)
}
