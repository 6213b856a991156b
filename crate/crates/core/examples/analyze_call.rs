use chrono::NaiveDate;
use risklabs::fixtures::{synthetic_news, synthetic_transcript};
use risklabs::llm::{analyze, AnalysisInputs, MockClient, PipelineConfig, QuestionBank, Task, TopicBank};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let date = NaiveDate::from_ymd_opt(2022, 2, 3).unwrap();
    let topics = TopicBank::default();
    let inputs = AnalysisInputs {
        transcript: synthetic_transcript("AAA", date, 50, 1),
        news: synthetic_news("AAA", date - chrono::Days::new(30), 29, 2, 1),
        questions: QuestionBank::default(),
        topics: topics.clone(),
    };
    let client = MockClient::new().with_dim(16).with_topics(topics);
    let cfg = PipelineConfig { embedding_dim: 16, ..Default::default() };
    let out = analyze(&inputs, &cfg, &client)?;
    println!("{} chunks, {} summarize calls", out.chunks.len(), client.count(Task::SummarizeChunk) + client.count(Task::SummarizeFinal));
    println!("{}", serde_json::to_string_pretty(&out.summaries)?);
    println!("{}", serde_json::to_string_pretty(&out.news)?);
    Ok(())
}
