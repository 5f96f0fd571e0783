//! Runs the four-stage curriculum, scaled down to seconds, on synthetic
//! closed-ended data and prints the per-stage losses.

use ltu::curriculum::{build_examples, default_curriculum, run_curriculum, scale_curriculum, TrainerConfig};
use ltu::model::{AudioLm, AudioLmConfig};
use ltu::synth::SynthCorpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let corpus = SynthCorpus::generate(12, 1)?;
    let pairs = corpus.closed_pairs(60, 1)?;
    let cfg = TrainerConfig::desk();
    let (rows, skipped) = build_examples(&pairs, &corpus.patches, cfg.text_cutoff)?;
    println!("{} training rows ({} skipped)", rows.len(), skipped.len());

    let stages = scale_curriculum(&default_curriculum(), 1e-4)?;
    let mut model = AudioLm::new_random(AudioLmConfig::toy(), 0)?;
    for r in run_curriculum(&mut model, &rows, &stages, &cfg, None)? {
        println!(
            "stage {}: {:>3} steps, epoch means {:?}, {:.1}s",
            r.stage,
            r.steps,
            r.epoch_mean_loss.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>(),
            r.wall_time_s
        );
    }
    Ok(())
}
