use chrono::NaiveDate;
use risklabs::fixtures::synthetic_news;
use risklabs::llm::news::{enrich_news, find_similar_news, group_news};
use risklabs::llm::{MockClient, TopicBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let start = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    let bank = TopicBank::default();
    let client = MockClient::new().with_dim(16).with_topics(bank.clone());
    let groups = group_news(&synthetic_news("AAA", start, 40, 2, 8));
    let (target, history) = groups.split_last().unwrap();
    let target_meta = enrich_news(target, &bank, &client)?;
    let history: Vec<_> = history.iter().map(|g| Ok((g.clone(), enrich_news(g, &bank, &client)?))).collect::<Result<_, risklabs::llm::LlmError>>()?;
    println!("target {} {}: {:?}", target.ticker, target.date, target_meta.sentiment);
    for hit in find_similar_news(&target_meta, &history, 4, bank.topics.len().div_ceil(2)) {
        println!("  {} similarity {:.3} next return {:?}", hit.date, hit.similarity, hit.next_return);
    }
    Ok(())
}
