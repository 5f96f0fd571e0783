use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ForgeError;

/// One labelled sound event. Timestamps are absent for weak labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundEvent {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub onset_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset_s: Option<f64>,
}

impl SoundEvent {
    pub fn new(label: &str) -> Self {
        Self {
            label: label.to_string(),
            feature: None,
            onset_s: None,
            offset_s: None,
        }
    }

    pub fn with_feature(mut self, feature: &str) -> Self {
        self.feature = Some(feature.to_string());
        self
    }

    pub fn at(mut self, onset_s: f64, offset_s: f64) -> Self {
        self.onset_s = Some(onset_s);
        self.offset_s = Some(offset_s);
        self
    }

    pub fn span(&self) -> Option<(f64, f64)> {
        Some((self.onset_s?, self.offset_s?))
    }
}

/// Everything known about one clip before any QA is generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioMeta {
    pub audio_id: String,
    #[serde(default)]
    pub events: Vec<SoundEvent>,
    /// Accepts a single string or a list on input; written back the same way.
    #[serde(
        rename = "caption",
        default,
        deserialize_with = "captions_de",
        serialize_with = "captions_ser",
        skip_serializing_if = "Vec::is_empty"
    )]
    pub captions: Vec<String>,
    #[serde(default)]
    pub source: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
    None(()),
}

fn captions_de<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
        OneOrMany::None(()) => Vec::new(),
    })
}

fn captions_ser<S: Serializer>(v: &[String], s: S) -> Result<S::Ok, S::Error> {
    match v {
        [one] => s.serialize_str(one),
        many => many.serialize(s),
    }
}

impl AudioMeta {
    pub fn validate(&self) -> Result<(), ForgeError> {
        let bad = |m: String| ForgeError::InvalidMeta { audio_id: self.audio_id.clone(), reason: m };
        if self.audio_id.is_empty() {
            return Err(bad("empty audio_id".into()));
        }
        if self.events.is_empty() && self.captions.iter().all(|c| c.trim().is_empty()) {
            return Err(bad("neither events nor caption".into()));
        }
        for e in &self.events {
            if e.label.trim().is_empty() {
                return Err(bad("event with empty label".into()));
            }
            match (e.onset_s, e.offset_s) {
                (None, None) => {}
                (Some(on), Some(off)) if on >= 0.0 && on < off => {}
                (on, off) => return Err(bad(format!("bad span {on:?}-{off:?} for {:?}", e.label))),
            }
        }
        Ok(())
    }

    pub fn all_timestamped(&self) -> bool {
        !self.events.is_empty() && self.events.iter().all(|e| e.span().is_some())
    }

    /// Events by onset (ties by label) when every event is timestamped,
    /// insertion order otherwise.
    pub fn ordered_events(&self) -> Vec<&SoundEvent> {
        let mut ev: Vec<&SoundEvent> = self.events.iter().collect();
        if self.all_timestamped() {
            ev.sort_by(|a, b| {
                a.onset_s
                    .unwrap_or(0.0)
                    .total_cmp(&b.onset_s.unwrap_or(0.0))
                    .then_with(|| a.label.cmp(&b.label))
            });
        }
        ev
    }

    /// Meta richness used to size the open-ended quota.
    pub fn richness(&self) -> f64 {
        if self.all_timestamped() {
            2.0
        } else if self.captions.iter().any(|c| !c.trim().is_empty()) {
            1.5
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    AcousticFeatures,
    Caption,
    Temporal,
    OpenEnded,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Classification,
        TaskKind::AcousticFeatures,
        TaskKind::Caption,
        TaskKind::Temporal,
        TaskKind::OpenEnded,
    ];

    pub fn is_closed(self) -> bool {
        self != TaskKind::OpenEnded
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::AcousticFeatures => "acoustic_features",
            TaskKind::Caption => "caption",
            TaskKind::Temporal => "temporal",
            TaskKind::OpenEnded => "open_ended",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = ForgeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ForgeError::UnknownTask(s.to_string()))
    }
}

/// One dataset row. Field order is the on-disk JSON order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QAPair {
    pub audio_id: String,
    pub question: String,
    pub answer: String,
    pub task: TaskKind,
    pub closed: bool,
    pub unanswerable: bool,
}

impl QAPair {
    pub fn closed(audio_id: &str, question: String, answer: String, task: TaskKind) -> Self {
        Self {
            audio_id: audio_id.to_string(),
            question,
            answer,
            task,
            closed: true,
            unanswerable: false,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.question.trim().is_empty() {
            return Err("empty question".into());
        }
        if self.answer.trim().is_empty() {
            return Err("empty answer".into());
        }
        if self.closed != self.task.is_closed() {
            return Err(format!("closed={} contradicts task {}", self.closed, self.task));
        }
        Ok(())
    }
}
