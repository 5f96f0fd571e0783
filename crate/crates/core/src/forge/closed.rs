//! Rule-based closed-ended generators: classification, acoustic features,
//! captioning and the three temporal families.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{AudioMeta, QAPair, SoundEvent, TaskKind};
use super::ForgeError;

/// Question paraphrases per closed task; the base question is always first.
/// `temporal_specific` entries contain a `{label}` placeholder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionBank {
    pub classification: Vec<String>,
    pub acoustic_features: Vec<String>,
    pub caption: Vec<String>,
    pub temporal_all: Vec<String>,
    pub temporal_specific: Vec<String>,
    pub temporal_order: Vec<String>,
}

fn owned(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for QuestionBank {
    fn default() -> Self {
        Self {
            classification: owned(&[
                "Classify the sound events in the audio clip.",
                "What sound events can be heard in this audio clip?",
                "Identify the sound events present in the audio.",
                "Which sounds are present in this recording?",
                "List the sound events you hear in the clip.",
                "What are the sound classes in this audio clip?",
                "Name the sound events that occur in the audio.",
                "Recognize the sound events in the audio clip.",
            ]),
            acoustic_features: owned(&[
                "Classify the sound events in the audio clip based on acoustic features.",
                "Based on their acoustic features, what sound events are in the audio clip?",
                "Describe the acoustic features of each sound and name the sound event.",
                "Identify the sound events in the clip and the acoustic characteristics that reveal them.",
                "What acoustic features do you hear, and which sound events do they indicate?",
                "Using acoustic cues, classify the sounds in this audio clip.",
                "List each sound event along with its acoustic features.",
                "Which sound events are present, judging by their acoustic properties?",
            ]),
            caption: owned(&[
                "Write an audio caption describing the sound.",
                "Describe the audio clip in one sentence.",
                "Write a short caption for this audio.",
                "What is happening in this audio clip? Answer with a caption.",
                "Summarize the content of the audio in a caption.",
                "Provide a one-sentence description of the sound.",
                "Caption this audio clip.",
                "Give a brief description of what can be heard.",
            ]),
            temporal_all: owned(&[
                "Classify the sound events in the audio clip, also output the timestamp of each audio event.",
                "List every sound event in the clip together with its start and end time.",
                "What sounds occur in the audio clip and when does each one happen?",
                "Identify the sound events and give the timestamps of each.",
                "Output each sound event in the audio with its onset and offset time.",
                "When does each sound event in the clip start and stop?",
                "Label the sound events of the audio clip with their time stamps.",
                "Give the time stamps of all sound events in the audio.",
            ]),
            temporal_specific: owned(&[
                "When does the sound of {label} happen in the audio clip?",
                "At what time can the sound of {label} be heard?",
                "Give the timestamp of the {label} sound.",
                "When does the {label} sound start and end?",
                "During which part of the clip is {label} heard?",
                "What are the onset and offset times of {label}?",
                "Output the time stamp of the sound of {label}.",
                "In which time range does {label} occur?",
            ]),
            temporal_order: owned(&[
                "Which sound begins and ends first?",
                "Which sound event starts first and which ends first?",
                "What is the first sound to begin, and the first to end?",
                "Which sound can be heard first, and which one stops first?",
                "Order check: which event starts earliest and which finishes earliest?",
                "Which sound event comes first in the audio clip, and which ends first?",
                "Tell me which sound begins first and which sound ends first.",
                "Among the sounds in the clip, which starts first and which ends first?",
            ]),
        }
    }
}

impl QuestionBank {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let lists = [
            ("classification", &self.classification),
            ("acoustic_features", &self.acoustic_features),
            ("caption", &self.caption),
            ("temporal_all", &self.temporal_all),
            ("temporal_specific", &self.temporal_specific),
            ("temporal_order", &self.temporal_order),
        ];
        for (name, list) in lists {
            if list.is_empty() || list.iter().any(|q| q.trim().is_empty()) {
                return Err(ForgeError::Config(format!("question bank {name} is empty or has blank entries")));
            }
        }
        if self.temporal_specific.iter().any(|q| !q.contains("{label}")) {
            return Err(ForgeError::Config("temporal_specific questions need a {label} placeholder".into()));
        }
        Ok(())
    }
}

fn pick<'a>(list: &'a [String], rng: &mut impl Rng) -> &'a str {
    &list[rng.gen_range(0..list.len())]
}

fn not_applicable(m: &AudioMeta, task: TaskKind, reason: &str) -> ForgeError {
    ForgeError::NotApplicable {
        audio_id: m.audio_id.clone(),
        task,
        reason: reason.to_string(),
    }
}

/// `[0.0s-1.0s]`
pub fn format_span(onset: f64, offset: f64) -> String {
    format!("[{onset:.1}s-{offset:.1}s]")
}

/// Distinct labels in onset order, `"; "`-joined.
pub fn gen_classification_qa(m: &AudioMeta, bank: &QuestionBank, rng: &mut impl Rng) -> Result<QAPair, ForgeError> {
    if m.events.is_empty() {
        return Err(not_applicable(m, TaskKind::Classification, "no sound events"));
    }
    let mut labels: Vec<&str> = Vec::new();
    for e in m.ordered_events() {
        if !labels.contains(&e.label.as_str()) {
            labels.push(&e.label);
        }
    }
    let q = pick(&bank.classification, rng).to_string();
    Ok(QAPair::closed(&m.audio_id, q, labels.join("; "), TaskKind::Classification))
}

/// `feature → label` per event, `"; "`-joined, closed with a period.
pub fn gen_acoustic_feature_qa(m: &AudioMeta, bank: &QuestionBank, rng: &mut impl Rng) -> Result<QAPair, ForgeError> {
    if m.events.is_empty() {
        return Err(not_applicable(m, TaskKind::AcousticFeatures, "no sound events"));
    }
    let mut segs = Vec::new();
    for e in m.ordered_events() {
        let f = e
            .feature
            .as_deref()
            .filter(|f| !f.trim().is_empty())
            .ok_or_else(|| not_applicable(m, TaskKind::AcousticFeatures, &format!("event {:?} has no feature", e.label)))?;
        segs.push(format!("{} → {}", f.trim(), e.label));
    }
    let q = pick(&bank.acoustic_features, rng).to_string();
    Ok(QAPair::closed(&m.audio_id, q, format!("{}.", segs.join("; ")), TaskKind::AcousticFeatures))
}

/// One pair per non-blank caption, answer trimmed.
pub fn gen_caption_qa(m: &AudioMeta, bank: &QuestionBank, rng: &mut impl Rng) -> Result<Vec<QAPair>, ForgeError> {
    let caps: Vec<&str> = m.captions.iter().map(|c| c.trim()).filter(|c| !c.is_empty()).collect();
    if caps.is_empty() {
        return Err(not_applicable(m, TaskKind::Caption, "no caption"));
    }
    Ok(caps
        .into_iter()
        .map(|c| QAPair::closed(&m.audio_id, pick(&bank.caption, rng).to_string(), c.to_string(), TaskKind::Caption))
        .collect())
}

/// All-timestamps, one specific sound, and (with two or more distinct
/// sounds) the begins/ends-first question.
pub fn gen_temporal_qa(m: &AudioMeta, bank: &QuestionBank, rng: &mut impl Rng) -> Result<Vec<QAPair>, ForgeError> {
    if !m.all_timestamped() {
        return Err(not_applicable(m, TaskKind::Temporal, "not every event has timestamps"));
    }
    let events = m.ordered_events();
    let span = |e: &SoundEvent| {
        let (on, off) = e.span().expect("checked timestamps");
        format_span(on, off)
    };
    let mut out = Vec::new();

    let all: Vec<String> = events.iter().map(|e| format!("{}: {}", e.label, span(e))).collect();
    out.push(QAPair::closed(
        &m.audio_id,
        pick(&bank.temporal_all, rng).to_string(),
        all.join("; "),
        TaskKind::Temporal,
    ));

    let chosen = events[rng.gen_range(0..events.len())];
    let spans: Vec<String> = events.iter().filter(|e| e.label == chosen.label).map(|e| span(e)).collect();
    out.push(QAPair::closed(
        &m.audio_id,
        pick(&bank.temporal_specific, rng).replace("{label}", &chosen.label),
        spans.join("; "),
        TaskKind::Temporal,
    ));

    // the order family needs at least two distinct sounds
    let mut first_seen: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for e in &events {
        let (on, off) = e.span().expect("checked timestamps");
        let entry = first_seen.entry(&e.label).or_insert((on, off));
        entry.0 = entry.0.min(on);
        entry.1 = entry.1.min(off);
    }
    if first_seen.len() >= 2 {
        let first_by = |key: fn(&(f64, f64)) -> f64| {
            first_seen
                .iter()
                .min_by(|a, b| key(a.1).total_cmp(&key(b.1)).then_with(|| a.0.cmp(b.0)))
                .map(|(l, _)| *l)
                .expect("non-empty")
        };
        let begins = first_by(|s| s.0);
        let ends = first_by(|s| s.1);
        let answer = if begins == ends {
            format!("{begins} begins and ends first.")
        } else {
            format!("{begins} begins first, and {ends} ends first.")
        };
        out.push(QAPair::closed(
            &m.audio_id,
            pick(&bank.temporal_order, rng).to_string(),
            answer,
            TaskKind::Temporal,
        ));
    }
    Ok(out)
}

/// Every closed-ended pair the meta supports, in a fixed task order.
pub fn gen_closed_qa(m: &AudioMeta, bank: &QuestionBank, rng: &mut impl Rng) -> Result<Vec<QAPair>, ForgeError> {
    m.validate()?;
    let mut out = Vec::new();
    if !m.events.is_empty() {
        out.push(gen_classification_qa(m, bank, rng)?);
        if m.events.iter().all(|e| e.feature.as_deref().is_some_and(|f| !f.trim().is_empty())) {
            out.push(gen_acoustic_feature_qa(m, bank, rng)?);
        }
    }
    if m.captions.iter().any(|c| !c.trim().is_empty()) {
        out.extend(gen_caption_qa(m, bank, rng)?);
    }
    if m.all_timestamped() {
        out.extend(gen_temporal_qa(m, bank, rng)?);
    }
    Ok(out)
}
