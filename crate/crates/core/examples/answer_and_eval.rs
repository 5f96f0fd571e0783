//! Answers a classification question for a few clips with a briefly
//! trained model, then scores the outputs against the clip labels.

use ltu::curriculum::{build_examples, default_curriculum, run_curriculum, scale_curriculum, TrainerConfig};
use ltu::eval::{eval_classify, HashedBowProvider, LabelSet, Prediction, Truth};
use ltu::model::{generate, AudioLm, AudioLmConfig, ByteTokenizer, GenerationConfig};
use ltu::synth::{SynthCorpus, CLASSES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = SynthCorpus::generate(8, 5)?;
    let cfg = TrainerConfig::desk();
    let (rows, _) = build_examples(&corpus.closed_pairs(40, 5)?, &corpus.patches, cfg.text_cutoff)?;
    let mut model = AudioLm::new_random(AudioLmConfig::toy(), 0)?;
    run_curriculum(&mut model, &rows, &scale_curriculum(&default_curriculum(), 5e-5)?, &cfg, None)?;

    let question = "Classify the sound events in the audio clip.";
    let gen = GenerationConfig { max_new_tokens: 40, ..GenerationConfig::default() };
    let (mut preds, mut truths) = (Vec::new(), Vec::new());
    for clip in corpus.clips.iter().take(4) {
        let grid = &corpus.patches[&clip.meta.audio_id];
        let ids = generate(&model, grid, &ByteTokenizer.encode_prompt(question), &gen)?;
        let output = ByteTokenizer.decode(&ids);
        println!("{}: {output:?}", clip.meta.audio_id);
        preds.push(Prediction { audio_id: clip.meta.audio_id.clone(), question: question.into(), output });
        truths.push(Truth {
            audio_id: clip.meta.audio_id.clone(),
            labels: Some(clip.meta.events.iter().map(|e| e.label.clone()).collect()),
            ..Default::default()
        });
    }

    let names: Vec<&str> = CLASSES.iter().map(|c| c.label).collect();
    let labels = LabelSet::new(&names, true)?;
    let report = eval_classify(&preds, &truths, &labels, &HashedBowProvider::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
