//! How temperature, top-k and top-p reshape a next-token distribution.

use ltu::model::{truncated_distribution, GenerationConfig, Sampler};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let logits = [2.0, 1.5, 0.5, 0.0, -1.0];
    for (t, k, p) in [(1.0, 5, 1.0), (0.5, 5, 1.0), (1.0, 2, 1.0), (1.0, 5, 0.8), (0.1, 500, 0.95)] {
        let d = truncated_distribution(&logits, t, k, p);
        let shown: Vec<String> = d.iter().map(|(id, p)| format!("{id}:{p:.3}")).collect();
        println!("T={t:<4} k={k:<3} p={p:<4} -> {}", shown.join(" "));
    }

    let mut sampler = Sampler::new(GenerationConfig { seed: 1, temperature: 0.8, repetition_penalty: 1.5, ..GenerationConfig::default() })?;
    let mut emitted = Vec::new();
    for _ in 0..10 {
        let next = sampler.next_token(&logits, &emitted);
        emitted.push(next);
    }
    println!("T=0.8 with repetition penalty 1.5: {emitted:?}");
    Ok(())
}
