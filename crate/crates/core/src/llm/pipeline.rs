//! End-to-end analysis of one earnings call: chunk, summarize, answer the
//! question bank, enrich and retrieve news, and encode the news feature.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::chunk::{chunk_transcript, Transcript};
use super::client::LlmClient;
use super::news::{encode_news_feature, enrich_news, find_similar_news, group_news, NewsFeature, NewsGroup, NewsItem, NewsMetadata, SimilarNews};
use super::prompts::{QuestionBank, TopicBank};
use super::qa::{answer_questions, embed_chunks, QuestionAnswers, DEFAULT_FLOOR, DEFAULT_TOP_K};
use super::summarize::{embed_text, hierarchical_summarize, Summaries};
use super::{LlmError, Result, DEFAULT_EMBEDDING_DIM};
use crate::training::{save_embedding, EmbeddingMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Characters per transcript chunk.
    pub chunk_budget: usize,
    pub top_k: usize,
    pub similarity_floor: f64,
    pub embedding_dim: usize,
    /// Days of company news before the call that feed the news feature.
    pub news_days: u64,
    pub similar_k: usize,
    /// Topic answers that must agree for a precedent; half the topics,
    /// rounded up, when unset.
    pub min_matches: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chunk_budget: 2000,
            top_k: DEFAULT_TOP_K,
            similarity_floor: DEFAULT_FLOOR,
            embedding_dim: DEFAULT_EMBEDDING_DIM,
            news_days: 3,
            similar_k: 4,
            min_matches: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisInputs {
    pub transcript: Transcript,
    pub news: Vec<NewsItem>,
    pub questions: QuestionBank,
    pub topics: TopicBank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkInfo {
    pub index: usize,
    pub start: usize,
    pub sentences: usize,
    pub chars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedGroup {
    pub group: NewsGroup,
    pub metadata: NewsMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsReport {
    pub recent: Vec<EnrichedGroup>,
    pub history: Vec<EnrichedGroup>,
    pub precedents: Vec<SimilarNews>,
    pub feature: NewsFeature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub ticker: String,
    pub date: NaiveDate,
    pub chunks: Vec<ChunkInfo>,
    pub summaries: Summaries,
    /// Summary embedding.
    pub summary_embedding: Vec<f64>,
    /// Answers and their embedding.
    pub answers: QuestionAnswers,
    pub news: NewsReport,
}

pub fn analyze<C: LlmClient + ?Sized>(inputs: &AnalysisInputs, cfg: &PipelineConfig, client: &C) -> Result<AnalysisOutput> {
    let t = &inputs.transcript;
    let chunks = chunk_transcript(t, cfg.chunk_budget)?;
    let summaries = hierarchical_summarize(&t.ticker, t.date, &chunks, client)?;
    let summary_embedding = embed_text(&summaries.embedding_text(), client)?;
    let chunk_embeddings = embed_chunks(&chunks, client)?;
    let answers = answer_questions(&chunks, &chunk_embeddings, &inputs.questions, client, cfg.top_k, cfg.similarity_floor)?;
    for (what, v) in [("summary", &summary_embedding), ("answers", &answers.embedding)] {
        if v.len() != cfg.embedding_dim {
            return Err(LlmError::Protocol(format!("{what} embedding has {} values, expected {}", v.len(), cfg.embedding_dim)));
        }
    }

    let window_start = t.date.checked_sub_days(Days::new(cfg.news_days)).unwrap_or(NaiveDate::MIN);
    let groups = group_news(&inputs.news);
    let enrich = |g: &NewsGroup| -> Result<EnrichedGroup> {
        Ok(EnrichedGroup { group: g.clone(), metadata: enrich_news(g, &inputs.topics, client)? })
    };
    let recent: Vec<EnrichedGroup> = groups
        .iter()
        .filter(|g| g.ticker == t.ticker && g.date >= window_start && g.date < t.date)
        .map(enrich)
        .collect::<Result<_>>()?;
    let history: Vec<EnrichedGroup> = groups.iter().filter(|g| g.date < window_start).map(enrich).collect::<Result<_>>()?;

    let pairs: Vec<(NewsGroup, NewsMetadata)> = history.iter().map(|e| (e.group.clone(), e.metadata.clone())).collect();
    let min_matches = cfg.min_matches.unwrap_or_else(|| inputs.topics.min_matches());
    let mut best: BTreeMap<usize, SimilarNews> = BTreeMap::new();
    for r in &recent {
        for s in find_similar_news(&r.metadata, &pairs, cfg.similar_k, min_matches) {
            match best.get(&s.index) {
                Some(prev) if prev.similarity >= s.similarity => {}
                _ => {
                    best.insert(s.index, s);
                }
            }
        }
    }
    let mut precedents: Vec<SimilarNews> = best.into_values().collect();
    precedents.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.date.cmp(&b.date)).then(a.index.cmp(&b.index)));
    precedents.truncate(cfg.similar_k);
    let recent_groups: Vec<NewsGroup> = recent.iter().map(|e| e.group.clone()).collect();
    let prec: Vec<(&NewsGroup, f64)> = precedents.iter().map(|p| (&history[p.index].group, p.similarity)).collect();
    let feature = encode_news_feature(&t.ticker, t.date, &recent_groups, &prec, client, cfg.embedding_dim)?;

    Ok(AnalysisOutput {
        ticker: t.ticker.clone(),
        date: t.date,
        chunks: chunks
            .iter()
            .map(|c| ChunkInfo { index: c.index, start: c.start, sentences: c.sentences.len(), chars: c.chars() })
            .collect(),
        summaries,
        summary_embedding,
        answers,
        news: NewsReport { recent, history, precedents, feature },
    })
}

fn vector_file(v: &[f64]) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::vector(v.iter().map(|&x| x as f32).collect()).map_err(|e| LlmError::Config(e.to_string()))
}

/// Writes `analysis.json` plus `summary.rlem`, `answers.rlem` and
/// `news.rlem` (one-row RLEM files, usable in a training manifest).
pub fn write_outputs(dir: &Path, out: &AnalysisOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(out)?;
    json.push('\n');
    fs::write(dir.join("analysis.json"), json)?;
    for (name, v) in [
        ("summary.rlem", &out.summary_embedding),
        ("answers.rlem", &out.answers.embedding),
        ("news.rlem", &out.news.feature.vector),
    ] {
        save_embedding(&dir.join(name), &vector_file(v)?).map_err(|e| LlmError::Config(e.to_string()))?;
    }
    Ok(())
}
