use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::client::{LlmClient, Task};
use super::prompts::{messages, QuestionBank};
use super::summarize::embed_text;
use super::{cosine, LlmError, Result};

pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_FLOOR: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnswer {
    pub question: String,
    /// `(chunk index, cosine similarity)` in rank order.
    pub retrieved: Vec<(usize, f64)>,
    pub context: Option<String>,
    /// `None` when the question is unanswerable from the transcript.
    pub answer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnswers {
    pub answers: Vec<QuestionAnswer>,
    /// Embedding of the answered answers, one per line; zeros when nothing
    /// was answered.
    pub embedding: Vec<f64>,
    pub missing: bool,
}

pub fn embed_chunks<C: LlmClient + ?Sized>(chunks: &[Chunk], client: &C) -> Result<Vec<Vec<f64>>> {
    chunks.iter().map(|c| embed_text(&c.text(), client)).collect()
}

/// Chunks ranked by similarity to `query` (ties keep the earlier chunk),
/// keeping at most `k` at or above `floor`. A lone chunk is always kept.
pub fn retrieve(query: &[f64], chunk_embeddings: &[Vec<f64>], k: usize, floor: f64) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> =
        chunk_embeddings.iter().enumerate().map(|(i, e)| (i, cosine(query, e))).collect();
    if scored.len() == 1 {
        return scored;
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().filter(|(_, s)| *s >= floor).take(k).collect()
}

fn is_unanswerable(s: &str) -> bool {
    let t = s.trim().trim_end_matches('.').to_lowercase();
    t.is_empty() || t == "unanswerable"
}

/// For each question: embed it, retrieve chunks, compress them with one
/// chat call and answer from the compressed context with a second.
pub fn answer_questions<C: LlmClient + ?Sized>(
    chunks: &[Chunk],
    chunk_embeddings: &[Vec<f64>],
    bank: &QuestionBank,
    client: &C,
    k: usize,
    floor: f64,
) -> Result<QuestionAnswers> {
    if bank.questions.is_empty() {
        return Err(LlmError::EmptyInput("question bank is empty".into()));
    }
    if chunks.is_empty() || chunks.len() != chunk_embeddings.len() {
        return Err(LlmError::Config(format!("{} chunks with {} embeddings", chunks.len(), chunk_embeddings.len())));
    }
    let mut answers = Vec::with_capacity(bank.questions.len());
    let mut done: Vec<String> = Vec::new();
    for q in &bank.questions {
        let qv = embed_text(q, client).map_err(|e| e.with_partial(&done))?;
        let retrieved = retrieve(&qv, chunk_embeddings, k, floor);
        if retrieved.is_empty() {
            answers.push(QuestionAnswer { question: q.clone(), retrieved, context: None, answer: None });
            continue;
        }
        let mut order: Vec<usize> = retrieved.iter().map(|r| r.0).collect();
        order.sort_unstable();
        let excerpts = order.iter().map(|&i| chunks[i].text()).collect::<Vec<_>>().join("\n");
        let m = messages(Task::CompressContext, &[("question", q), ("text", &excerpts)])?;
        let context = client.chat(Task::CompressContext, &m).map_err(|e| e.with_partial(&done))?;
        let m = messages(Task::AnswerQuestion, &[("question", q), ("text", &context)])?;
        let reply = client.chat(Task::AnswerQuestion, &m).map_err(|e| e.with_partial(&done))?;
        let answer = (!is_unanswerable(&reply)).then(|| reply.trim().to_string());
        if let Some(a) = &answer {
            done.push(a.clone());
        }
        answers.push(QuestionAnswer { question: q.clone(), retrieved, context: Some(context), answer });
    }
    let dim = chunk_embeddings[0].len();
    let (embedding, missing) = if done.is_empty() {
        (vec![0.0; dim], true)
    } else {
        (embed_text(&done.join("\n"), client)?, false)
    };
    Ok(QuestionAnswers { answers, embedding, missing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::chunk::{chunk_transcript, Transcript};
    use crate::llm::mock::MockClient;
    use chrono::NaiveDate;

    fn chunks(n: usize) -> Vec<Chunk> {
        let t = Transcript {
            ticker: "AAA".into(),
            date: NaiveDate::from_ymd_opt(2021, 4, 27).unwrap(),
            sentences: (0..n).map(|i| format!("Part {i} talks about topic{i}.")).collect(),
        };
        chunk_transcript(&t, 30).unwrap()
    }

    fn basis(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        v
    }

    #[test]
    fn single_chunk_always_retrieved() {
        let c = chunks(1);
        let m = MockClient::new().with_dim(16);
        let e = embed_chunks(&c, &m).unwrap();
        let bank = QuestionBank { questions: vec!["Completely unrelated words?".into()] };
        let qa = answer_questions(&c, &e, &bank, &m, 4, 0.99).unwrap();
        assert_eq!(qa.answers[0].retrieved.len(), 1);
        assert_eq!(qa.answers[0].answer.as_deref(), Some("Part 0 talks about topic0."));
        assert!(!qa.missing);
    }

    #[test]
    fn planted_match_is_the_only_retrieval() {
        let c = chunks(10);
        assert_eq!(c.len(), 10);
        let q = "Which part is planted?";
        let mut m = MockClient::new().with_embedding(q, basis(10, 7));
        for (i, ch) in c.iter().enumerate() {
            m = m.with_embedding(&ch.text(), basis(10, i));
        }
        let mut planted = basis(10, 7);
        planted[7] = 0.5;
        m = m.with_embedding(&c[7].text(), planted);
        let e = embed_chunks(&c, &m).unwrap();
        let bank = QuestionBank { questions: vec![q.into()] };
        let qa = answer_questions(&c, &e, &bank, &m, 4, 0.2).unwrap();
        assert_eq!(qa.answers[0].retrieved, vec![(7, 1.0)]);
    }

    #[test]
    fn empty_retrieval_is_unanswerable() {
        let c = chunks(3);
        let q = "Nothing matches?";
        let mut m = MockClient::new().with_embedding(q, basis(4, 3));
        for (i, ch) in c.iter().enumerate() {
            m = m.with_embedding(&ch.text(), basis(4, i));
        }
        let e = embed_chunks(&c, &m).unwrap();
        let qa = answer_questions(&c, &e, &QuestionBank { questions: vec![q.into()] }, &m, 4, 0.2).unwrap();
        assert_eq!(qa.answers[0].answer, None);
        assert!(qa.missing);
        assert_eq!(qa.embedding, vec![0.0; 4]);
        assert_eq!(m.chat_tasks().len(), 0);
    }

    #[test]
    fn five_questions_ten_chunks_call_log() {
        let c = chunks(10);
        let m = MockClient::new().with_dim(32);
        let e = embed_chunks(&c, &m).unwrap();
        let bank = QuestionBank { questions: (0..5).map(|i| format!("What about topic{i} in part {i}?")).collect() };
        let qa = answer_questions(&c, &e, &bank, &m, 3, -1.0).unwrap();
        assert!(qa.answers.iter().all(|a| a.retrieved.len() == 3));
        let tasks = m.chat_tasks();
        assert_eq!(tasks.len(), 10);
        for pair in tasks.chunks(2) {
            assert_eq!(pair, [Task::CompressContext, Task::AnswerQuestion]);
        }
    }

    #[test]
    fn ranking_ties_prefer_earlier_chunk() {
        let e = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(retrieve(&[1.0, 0.0], &e, 4, 0.2), vec![(0, 1.0), (1, 1.0)]);
    }
}
