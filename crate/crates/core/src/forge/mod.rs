//! Dataset forging: closed-ended rule generators, LLM-assisted open-ended
//! generation, feature banks, class-balanced sampling and statistics.

mod aig;
mod closed;
mod features;
mod manifest;
mod open;
mod sampler;
mod stats;
mod types;

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use aig::{
    build_aig_prompt, detect_unanswerable, parse_aig_response, parse_aig_response_with, serialize_meta, AigParse,
    UnanswerableDetector, AIG_INSTRUCTIONS,
};
pub use closed::{
    format_span, gen_acoustic_feature_qa, gen_caption_qa, gen_classification_qa, gen_closed_qa, gen_temporal_qa,
    QuestionBank,
};
pub use features::{feature_prompt, gen_feature_bank, FeatureBank, FeatureBankReport, DESCRIPTIONS_PER_CLASS};
pub use manifest::{
    read_jsonl, to_jsonl, validate_manifest, validate_manifest_text, write_jsonl, ValidationReport, Violation,
};
pub use open::{forge_open, open_quota, OpenReport};
pub use sampler::{sample_audioset, sampler_weights, SamplerWeights};
pub use stats::{compute_dataset_stats, stats_from_task_counts, DatasetStats, TaskShare};
pub use types::{AudioMeta, QAPair, SoundEvent, TaskKind};

use crate::llm::LlmError;

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid meta {audio_id:?}: {reason}")]
    InvalidMeta { audio_id: String, reason: String },
    #[error("{task} QA not applicable to {audio_id:?}: {reason}")]
    NotApplicable { audio_id: String, task: TaskKind, reason: String },
    #[error("unknown task kind {0:?}")]
    UnknownTask(String),
    #[error("unparseable generation output at line {line} ({reason}): {span:?}")]
    AigParse { line: usize, span: String, reason: String },
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ForgeError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = Path::new(&tmp);
    let mut f = fs::File::create(tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// FNV-1a, used to give each clip its own RNG stream.
pub(crate) fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// All closed-ended pairs for `metas`, in ascending `audio_id` order. Each
/// clip draws from its own stream derived from `(seed, audio_id)`, so one
/// clip's pairs do not depend on which other clips are present.
pub fn forge_closed(metas: &[AudioMeta], bank: &QuestionBank, seed: u64) -> Result<Vec<QAPair>, ForgeError> {
    bank.validate()?;
    let mut sorted: Vec<&AudioMeta> = metas.iter().collect();
    sorted.sort_by(|a, b| a.audio_id.cmp(&b.audio_id));
    let mut out = Vec::new();
    for m in sorted {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&m.audio_id));
        out.extend(gen_closed_qa(m, bank, &mut rng)?);
    }
    Ok(out)
}

/// The street-scene clip used throughout the docs: siren, traffic, a
/// revving engine and an impact, with features, timestamps and a caption.
pub fn ambulance_meta() -> AudioMeta {
    AudioMeta {
        audio_id: "ambulance".into(),
        events: vec![
            SoundEvent::new("Ambulance (siren)").with_feature("High-pitched and wailing").at(0.0, 1.0),
            SoundEvent::new("Traffic noise, roadway noise").with_feature("Droning, loud and intrusive").at(0.0, 10.0),
            SoundEvent::new("Accelerating, revving, vroom").with_feature("High-pitched, short and intense").at(2.0, 10.0),
            SoundEvent::new("Generic impact sounds").with_feature("Loud and sharp").at(6.7, 6.8),
        ],
        captions: vec!["An ambulance siren echoes while traffic noise fades, and an engine revs.".into()],
        source: "audioset_strong".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forge_closed_is_order_independent() {
        let mut other = ambulance_meta();
        other.audio_id = "zz".into();
        let a = forge_closed(&[ambulance_meta(), other.clone()], &QuestionBank::default(), 7).unwrap();
        let b = forge_closed(&[other, ambulance_meta()], &QuestionBank::default(), 7).unwrap();
        assert_eq!(a, b);
        let solo = forge_closed(&[ambulance_meta()], &QuestionBank::default(), 7).unwrap();
        assert_eq!(&a[..solo.len()], &solo[..]);
    }
}
