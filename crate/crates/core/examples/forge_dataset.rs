//! Builds a small instruction dataset from synthetic clips: closed-ended
//! pairs by rule, open-ended pairs through an offline mock LLM.

use ltu::forge::{build_aig_prompt, compute_dataset_stats, forge_closed, forge_open, QuestionBank, UnanswerableDetector};
use ltu::llm::MockClient;
use ltu::synth::SynthCorpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = SynthCorpus::generate(6, 42)?;
    let metas = corpus.metas();

    let closed = forge_closed(&metas, &QuestionBank::default(), 0)?;
    for p in closed.iter().take(5) {
        println!("[{}] Q: {}\n    A: {}", p.task, p.question, p.answer);
    }

    println!("\n--- generation prompt for {} ---\n{}\n", metas[0].audio_id, build_aig_prompt(&metas[0]));

    let client = MockClient::new().with_templates();
    let open = forge_open(&metas, &client, &UnanswerableDetector::default())?;
    println!("{} open-ended pairs from {} mock calls", open.pairs.len(), open.client_calls);

    let mut all = closed;
    all.extend(open.pairs);
    let stats = compute_dataset_stats(&all)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}
