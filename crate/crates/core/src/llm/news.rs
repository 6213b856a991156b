use std::collections::BTreeMap;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::client::{LlmClient, Task};
use super::prompts::{messages, TopicBank};
use super::summarize::embed_text;
use super::{cosine, LlmError, Result};

/// One line of the news JSONL input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub ticker: String,
    pub date: NaiveDate,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_return: Option<f64>,
}

/// All news about one company on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsGroup {
    pub ticker: String,
    pub date: NaiveDate,
    pub items: Vec<String>,
    /// Next-day return that followed the news, when known.
    pub next_return: Option<f64>,
}

impl NewsGroup {
    pub fn text(&self) -> String {
        self.items.join("\n")
    }
}

pub fn read_news_jsonl<R: BufRead>(reader: R) -> Result<Vec<NewsItem>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: NewsItem = serde_json::from_str(&line)
            .map_err(|e| LlmError::Protocol(format!("news line {}: {e}", i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

/// Groups items by (date, ticker) in that order, keeping item order within
/// a group. The first annotated return of a group is kept.
pub fn group_news(items: &[NewsItem]) -> Vec<NewsGroup> {
    let mut map: BTreeMap<(NaiveDate, String), NewsGroup> = BTreeMap::new();
    for it in items {
        let g = map.entry((it.date, it.ticker.clone())).or_insert_with(|| NewsGroup {
            ticker: it.ticker.clone(),
            date: it.date,
            items: Vec::new(),
            next_return: None,
        });
        g.items.push(it.text.clone());
        if g.next_return.is_none() {
            g.next_return = it.next_return;
        }
    }
    map.into_values().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Negative,
    Neutral,
    Positive,
}

fn normalized(reply: &str) -> String {
    reply.trim().trim_end_matches('.').trim().to_lowercase()
}

impl Sentiment {
    pub fn parse(reply: &str) -> Result<Self> {
        match normalized(reply).as_str() {
            "negative" => Ok(Sentiment::Negative),
            "neutral" => Ok(Sentiment::Neutral),
            "positive" => Ok(Sentiment::Positive),
            _ => Err(LlmError::Protocol(format!("sentiment reply {reply:?} is not negative, neutral or positive"))),
        }
    }
}

fn parse_yes_no(reply: &str) -> Result<bool> {
    match normalized(reply).as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(LlmError::Protocol(format!("topic reply {reply:?} is not yes or no"))),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicAnswer {
    pub topic: String,
    pub answer: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsMetadata {
    pub sentiment: Sentiment,
    pub topics: Vec<TopicAnswer>,
    pub market_response: Option<String>,
    pub embedding: Vec<f64>,
}

/// Sentiment call, one yes/no call per topic, a market-response call when
/// any topic fires, then the group embedding.
pub fn enrich_news<C: LlmClient + ?Sized>(group: &NewsGroup, bank: &TopicBank, client: &C) -> Result<NewsMetadata> {
    if group.items.is_empty() {
        return Err(LlmError::EmptyInput(format!("{} {} news group is empty", group.ticker, group.date)));
    }
    let text = group.text();
    let date = group.date.to_string();
    let base = [("ticker", group.ticker.as_str()), ("date", date.as_str()), ("text", text.as_str())];
    let sentiment = Sentiment::parse(&client.chat(Task::NewsSentiment, &messages(Task::NewsSentiment, &base)?)?)?;
    let mut topics = Vec::with_capacity(bank.topics.len());
    for t in &bank.topics {
        let mut vars = base.to_vec();
        vars.push(("topic", &t.name));
        vars.push(("question", &t.question));
        let reply = client.chat(Task::NewsTopic, &messages(Task::NewsTopic, &vars)?)?;
        topics.push(TopicAnswer { topic: t.name.clone(), answer: parse_yes_no(&reply)? });
    }
    let fired: Vec<&str> = topics.iter().filter(|t| t.answer).map(|t| t.topic.as_str()).collect();
    let market_response = if fired.is_empty() {
        None
    } else {
        let joined = fired.join(", ");
        let mut vars = base.to_vec();
        vars.push(("topics", &joined));
        Some(client.chat(Task::NewsMarketResponse, &messages(Task::NewsMarketResponse, &vars)?)?)
    };
    let embedding = embed_text(&text, client)?;
    Ok(NewsMetadata { sentiment, topics, market_response, embedding })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarNews {
    /// Position in the history slice.
    pub index: usize,
    pub ticker: String,
    pub date: NaiveDate,
    pub similarity: f64,
    pub next_return: Option<f64>,
}

fn matching_answers(a: &NewsMetadata, b: &NewsMetadata) -> usize {
    a.topics
        .iter()
        .filter(|t| b.topics.iter().any(|u| u.topic == t.topic && u.answer == t.answer))
        .count()
}

/// Keeps history groups with the same sentiment and at least `min_matches`
/// identical topic answers, ranks them by embedding cosine similarity
/// (ties: earlier date, then earlier position) and returns the top `k`.
pub fn find_similar_news(
    target: &NewsMetadata,
    history: &[(NewsGroup, NewsMetadata)],
    k: usize,
    min_matches: usize,
) -> Vec<SimilarNews> {
    let mut hits: Vec<SimilarNews> = history
        .iter()
        .enumerate()
        .filter(|(_, (_, m))| m.sentiment == target.sentiment && matching_answers(target, m) >= min_matches)
        .map(|(index, (g, m))| SimilarNews {
            index,
            ticker: g.ticker.clone(),
            date: g.date,
            similarity: cosine(&target.embedding, &m.embedding),
            next_return: g.next_return,
        })
        .collect();
    hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.date.cmp(&b.date)).then(a.index.cmp(&b.index)));
    hits.truncate(k);
    hits
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsFeature {
    pub vector: Vec<f64>,
    /// No news was available; the vector is zero.
    pub missing: bool,
    pub analysis: Option<String>,
}

/// Turns recent news and retrieved precedents into an analysis text and
/// embeds it as the news feature.
pub fn encode_news_feature<C: LlmClient + ?Sized>(
    ticker: &str,
    date: NaiveDate,
    recent: &[NewsGroup],
    precedents: &[(&NewsGroup, f64)],
    client: &C,
    dim: usize,
) -> Result<NewsFeature> {
    if recent.iter().all(|g| g.items.is_empty()) {
        return Ok(NewsFeature { vector: vec![0.0; dim], missing: true, analysis: None });
    }
    let mut lines = Vec::new();
    for g in recent {
        for it in &g.items {
            lines.push(format!("{} {}: {}", g.date, g.ticker, it));
        }
    }
    for (g, sim) in precedents {
        let reaction = g.next_return.map_or("unknown".to_string(), |r| format!("{:+.2}%", 100.0 * r));
        lines.push(format!(
            "Precedent {} {} (similarity {:.3}, next-day return {}): {}",
            g.date,
            g.ticker,
            sim,
            reaction,
            g.items.join(" ")
        ));
    }
    let text = lines.join("\n");
    let d = date.to_string();
    let m = messages(Task::NewsFeature, &[("ticker", ticker), ("date", &d), ("text", &text)])?;
    let analysis = client.chat(Task::NewsFeature, &m)?;
    let vector = embed_text(&analysis, client)?;
    if vector.len() != dim {
        return Err(LlmError::Protocol(format!("news embedding has {} values, expected {dim}", vector.len())));
    }
    Ok(NewsFeature { vector, missing: false, analysis: Some(analysis) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::MockClient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn day(d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, d).unwrap()
    }

    fn group(text: &str, d: u32) -> NewsGroup {
        NewsGroup { ticker: "AAA".into(), date: day(d), items: vec![text.into()], next_return: Some(-0.01) }
    }

    fn meta(sentiment: Sentiment, answers: &[bool], embedding: Vec<f64>) -> NewsMetadata {
        NewsMetadata {
            sentiment,
            topics: answers.iter().enumerate().map(|(i, &a)| TopicAnswer { topic: format!("t{i}"), answer: a }).collect(),
            market_response: None,
            embedding,
        }
    }

    #[test]
    fn neutral_no_topics_means_no_market_call() {
        let m = MockClient::new().with_dim(8);
        let md = enrich_news(&group("The company held its annual picnic.", 2), &TopicBank::default(), &m).unwrap();
        assert_eq!(md.sentiment, Sentiment::Neutral);
        assert!(md.topics.iter().all(|t| !t.answer));
        assert_eq!(md.market_response, None);
        assert_eq!(m.chat_tasks().len(), 1 + 6);
        assert_eq!(m.embed_count(), 1);
    }

    #[test]
    fn one_topic_fires_one_market_call() {
        let m = MockClient::new()
            .with_dim(8)
            .with_rule(|task, msgs| match task {
                Task::NewsTopic => Some(if msgs[1].content.contains("Topic: mergers_acquisitions") { "Yes." } else { "no" }.into()),
                _ => None,
            });
        let md = enrich_news(&group("Anything.", 2), &TopicBank::default(), &m).unwrap();
        assert_eq!(md.topics.iter().filter(|t| t.answer).count(), 1);
        assert!(md.topics[1].answer);
        assert_eq!(m.count(Task::NewsMarketResponse), 1);
    }

    #[test]
    fn bad_sentiment_is_protocol_error() {
        let m = MockClient::new().with_rule(|t, _| (t == Task::NewsSentiment).then(|| "somewhat bullish".into()));
        assert!(matches!(enrich_news(&group("x", 2), &TopicBank::default(), &m), Err(LlmError::Protocol(_))));
    }

    #[test]
    fn duplicate_ranks_first() {
        let e = vec![0.3, -0.2, 0.9];
        let target = meta(Sentiment::Positive, &[true, false], e.clone());
        let history = vec![
            (group("a", 1), meta(Sentiment::Positive, &[true, false], vec![0.3, -0.1, 0.9])),
            (group("b", 2), meta(Sentiment::Positive, &[true, false], e.clone())),
        ];
        let r = find_similar_news(&target, &history, 4, 1);
        assert_eq!(r[0].index, 1);
        assert!((r[0].similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filter_can_remove_everything() {
        let target = meta(Sentiment::Negative, &[true, true], vec![1.0]);
        let history = vec![
            (group("a", 1), meta(Sentiment::Positive, &[true, true], vec![1.0])),
            (group("b", 2), meta(Sentiment::Negative, &[false, false], vec![1.0])),
        ];
        assert!(find_similar_news(&target, &history, 4, 1).is_empty());
    }

    #[test]
    fn planted_neighbor_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dim = 32;
        let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        };
        let target_e = unit(&mut rng);
        let mut history: Vec<(NewsGroup, NewsMetadata)> = (0..100)
            .map(|i| (group("h", 1 + (i % 28) as u32), meta(Sentiment::Neutral, &[false, true], unit(&mut rng))))
            .collect();
        let mut near: Vec<f64> = target_e.iter().zip(unit(&mut rng)).map(|(a, b)| a + 0.05 * b).collect();
        let n = near.iter().map(|x| x * x).sum::<f64>().sqrt();
        near.iter_mut().for_each(|x| *x /= n);
        history[63].1.embedding = near;
        let target = meta(Sentiment::Neutral, &[false, true], target_e.clone());
        let got = find_similar_news(&target, &history, 4, 1);
        let mut brute: Vec<(usize, f64)> =
            history.iter().enumerate().map(|(i, (_, m))| (i, cosine(&target_e, &m.embedding))).collect();
        brute.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        assert_eq!(got[0].index, 63);
        assert_eq!(got.iter().map(|s| s.index).collect::<Vec<_>>(), brute[..4].iter().map(|b| b.0).collect::<Vec<_>>());
    }

    #[test]
    fn missing_news_feature() {
        let m = MockClient::new().with_dim(8);
        let f = encode_news_feature("AAA", day(10), &[], &[], &m, 8).unwrap();
        assert!(f.missing);
        assert_eq!(f.vector, vec![0.0; 8]);
        assert!(m.calls().is_empty());
        let g = group("Shares rose after a record quarter.", 9);
        let a = encode_news_feature("AAA", day(10), std::slice::from_ref(&g), &[(&g, 0.5)], &m, 8).unwrap();
        let b = encode_news_feature("AAA", day(10), std::slice::from_ref(&g), &[(&g, 0.5)], &m, 8).unwrap();
        assert_eq!(a, b);
        assert!(!a.missing);
    }

    #[test]
    fn jsonl_grouping() {
        let text = r#"{"ticker":"BBB","date":"2020-03-02","text":"b1"}
{"ticker":"AAA","date":"2020-03-02","text":"a1","next_return":0.01}

{"ticker":"AAA","date":"2020-03-01","text":"a0"}
{"ticker":"AAA","date":"2020-03-02","text":"a2","next_return":0.02}
"#;
        let items = read_news_jsonl(text.as_bytes()).unwrap();
        let g = group_news(&items);
        assert_eq!(g.len(), 3);
        assert_eq!((g[0].date, g[1].ticker.as_str(), g[2].ticker.as_str()), (day(1), "AAA", "BBB"));
        assert_eq!(g[1].items, vec!["a1", "a2"]);
        assert_eq!(g[1].next_return, Some(0.01));
        assert!(read_news_jsonl("{bad".as_bytes()).is_err());
    }
}
