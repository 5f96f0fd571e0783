//! A small deterministic corpus of synthesized clips with full meta
//! information, used by the examples, tests and desk-scale training.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioError, AudioFrontend, PatchGrid, Waveform, CLIP_SECONDS, SAMPLE_RATE_HZ};
use crate::forge::{forge_closed, AudioMeta, FeatureBank, ForgeError, QAPair, QuestionBank, SoundEvent};

/// A synthetic sound class: its label, a short acoustic description, and
/// the clause used when writing captions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthClass {
    pub label: &'static str,
    pub feature: &'static str,
    pub phrase: &'static str,
}

pub const CLASSES: [SynthClass; 8] = [
    SynthClass { label: "Siren", feature: "High-pitched, wailing tone", phrase: "a siren wails" },
    SynthClass { label: "Dog bark", feature: "Sharp, loud bursts", phrase: "a dog barks" },
    SynthClass { label: "Engine", feature: "Low, steady rumble", phrase: "an engine rumbles" },
    SynthClass { label: "Church bell", feature: "Resonant, ringing tone", phrase: "a church bell rings" },
    SynthClass { label: "Rain", feature: "Soft, constant patter", phrase: "rain falls" },
    SynthClass { label: "Whistle", feature: "Shrill, piercing tone", phrase: "someone whistles" },
    SynthClass { label: "Drum", feature: "Deep, rhythmic thumps", phrase: "a drum beats" },
    SynthClass { label: "Bird chirp", feature: "Bright, rapid chirps", phrase: "a bird chirps" },
];

pub fn class_by_label(label: &str) -> Option<&'static SynthClass> {
    CLASSES.iter().find(|c| c.label == label)
}

/// One sample of class `c` at time `t` seconds since event onset. `rng`
/// supplies the noise for noisy classes.
fn class_sample(c: usize, t: f64, rng: &mut impl Rng) -> f64 {
    let noise = |rng: &mut dyn rand::RngCore| rng.gen_range(-1.0..1.0);
    match c {
        // 0.5 Hz sweep between 600 and 1400 Hz
        0 => (TAU * (1000.0 * t - 400.0 / (TAU * 0.5) * (TAU * 0.5 * t).cos())).sin(),
        1 => {
            let ph = t % 0.6;
            if ph < 0.15 {
                (-ph * 20.0).exp() * ((TAU * 450.0 * t).sin() + 0.5 * (TAU * 900.0 * t).sin())
            } else {
                0.0
            }
        }
        2 => (1..6).map(|h| (TAU * 80.0 * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.6 + 0.05 * noise(rng),
        3 => {
            let ph = t % 2.0;
            (-ph * 1.5).exp() * ((TAU * 880.0 * t).sin() + 0.4 * (TAU * 2210.0 * t).sin())
        }
        4 => 0.4 * noise(rng),
        5 => (TAU * 2500.0 * t).sin(),
        6 => {
            let ph = t % 0.5;
            (-ph * 12.0).exp() * ((TAU * 60.0 * t).sin() + 0.2 * noise(rng))
        }
        _ => {
            let ph = t % 0.25;
            if ph < 0.08 {
                (TAU * (4000.0 * ph + 12500.0 * ph * ph)).sin()
            } else {
                0.0
            }
        }
    }
}

/// A generated clip: its meta information and waveform.
#[derive(Debug, Clone)]
pub struct SynthClip {
    pub meta: AudioMeta,
    pub wave: Waveform,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn caption(classes: &[usize]) -> String {
    let mut s = classes.iter().map(|&c| CLASSES[c].phrase).collect::<Vec<_>>().join(" while ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

/// Synthesizes clip `index` of the corpus for `seed`: one to three distinct
/// classes, each with a 0.1 s-aligned span inside the 10 s clip.
pub fn synth_clip(seed: u64, index: usize) -> Result<SynthClip, AudioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
    let k = rng.gen_range(1..=3);
    let mut picked: Vec<usize> = (0..CLASSES.len()).collect();
    picked.shuffle(&mut rng);
    picked.truncate(k);
    let n = (CLIP_SECONDS * SAMPLE_RATE_HZ as f64) as usize;
    let mut samples = vec![0.0; n];
    let mut events = Vec::with_capacity(k);
    for &c in &picked {
        let onset = round1(rng.gen_range(0.0..6.0));
        let offset = round1(rng.gen_range(onset + 2.0..=CLIP_SECONDS));
        let (a, b) = ((onset * SAMPLE_RATE_HZ as f64) as usize, ((offset * SAMPLE_RATE_HZ as f64) as usize).min(n));
        for (i, s) in samples[a..b].iter_mut().enumerate() {
            *s += class_sample(c, i as f64 / SAMPLE_RATE_HZ as f64, &mut rng);
        }
        events.push(SoundEvent::new(CLASSES[c].label).with_feature(CLASSES[c].feature).at(onset, offset));
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s *= 0.9 / peak);
    }
    events.sort_by(|x, y| x.onset_s.partial_cmp(&y.onset_s).unwrap_or(std::cmp::Ordering::Equal));
    let captions = vec![caption(&picked)];
    Ok(SynthClip {
        meta: AudioMeta {
            audio_id: format!("synth-{index:04}"),
            events,
            captions,
            source: "synthetic".into(),
        },
        wave: Waveform::new(samples, SAMPLE_RATE_HZ)?,
    })
}

/// Clips with their patch grids computed once.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub clips: Vec<SynthClip>,
    pub patches: HashMap<String, Arc<PatchGrid>>,
}

impl SynthCorpus {
    pub fn generate(n_clips: usize, seed: u64) -> Result<Self, AudioError> {
        let frontend = AudioFrontend::default();
        let mut clips = Vec::with_capacity(n_clips);
        let mut patches = HashMap::with_capacity(n_clips);
        for i in 0..n_clips {
            let clip = synth_clip(seed, i)?;
            patches.insert(clip.meta.audio_id.clone(), Arc::new(frontend.patches(&clip.wave)?));
            clips.push(clip);
        }
        Ok(Self { clips, patches })
    }

    pub fn metas(&self) -> Vec<AudioMeta> {
        self.clips.iter().map(|c| c.meta.clone()).collect()
    }

    /// Closed-ended QA pairs over the corpus, cut to at most `n_pairs`.
    pub fn closed_pairs(&self, n_pairs: usize, seed: u64) -> Result<Vec<QAPair>, ForgeError> {
        let mut pairs = forge_closed(&self.metas(), &QuestionBank::default(), seed)?;
        pairs.truncate(n_pairs);
        Ok(pairs)
    }
}

/// The feature descriptions of every synthetic class.
pub fn synth_feature_bank() -> FeatureBank {
    FeatureBank {
        classes: CLASSES
            .iter()
            .map(|c| (c.label.to_string(), vec![c.feature.to_string()]))
            .collect::<BTreeMap<_, _>>(),
    }
}
