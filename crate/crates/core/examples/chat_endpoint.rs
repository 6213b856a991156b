//! Sends one chat and one embedding request to an endpoint implementing the
//! `/chat` and `/embeddings` contract. Usage:
//! `RISKLABS_LLM_BASE_URL=http://host:port cargo run --example chat_endpoint`

use risklabs::llm::{ChatClientConfig, ChatMessage, HttpClient, LlmClient, Task};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let Ok(base_url) = std::env::var("RISKLABS_LLM_BASE_URL") else {
        println!("set RISKLABS_LLM_BASE_URL (and optionally RISKLABS_LLM_API_KEY) to run this example");
        return Ok(());
    };
    let client = HttpClient::new(ChatClientConfig { base_url, ..Default::default() })?;
    let reply = client.chat(
        Task::SummarizeChunk,
        &[ChatMessage::system("Summarize in one sentence."), ChatMessage::user("Revenue grew 12% on strong cloud demand.")],
    )?;
    println!("chat: {reply}");
    println!("embedding dim: {}", client.embed(&reply)?.len());
    Ok(())
}
