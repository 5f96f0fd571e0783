use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{LlmClient, LlmError};

/// One recorded exchange, stored as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub prompt: String,
    pub response: String,
}

const FEATURE_PREFIX: &str = "describe the acoustic characteristic of ";
const FEATURE_SUFFIX: &str = " sound precisely with a sentence less than 10 words";

/// Offline client. Serves recorded responses by exact prompt (cycling when a
/// prompt has several), otherwise falls back to deterministic templates for
/// the prompt families this crate issues. Never touches the network.
#[derive(Default)]
pub struct MockClient {
    fixtures: HashMap<String, Vec<String>>,
    templates: bool,
    calls: Mutex<Vec<String>>,
}

impl MockClient {
    /// Template-only mock.
    pub fn new() -> Self {
        Self {
            templates: true,
            ..Self::default()
        }
    }

    /// Fixture-only mock: unknown prompts are an error.
    pub fn replay(fixtures: Vec<ReplayFixture>) -> Self {
        let mut m = Self::default();
        for f in fixtures {
            m.fixtures.entry(f.prompt).or_default().push(f.response);
        }
        m
    }

    pub fn with_templates(mut self) -> Self {
        self.templates = true;
        self
    }

    pub fn load_fixtures(path: &Path) -> Result<Vec<ReplayFixture>, LlmError> {
        fs::read_to_string(path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| LlmError::Malformed(format!("fixture: {e}"))))
            .collect()
    }

    /// Every prompt received, in order.
    pub fn call_log(&self) -> Vec<String> {
        self.calls.lock().expect("mock lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("mock lock").len()
    }

    fn template(prompt: &str, nth: usize) -> Option<String> {
        if let Some(rest) = prompt.strip_prefix(FEATURE_PREFIX) {
            let class = rest.strip_suffix(FEATURE_SUFFIX).unwrap_or(rest);
            return Some(format!("feature-{nth} of {class}"));
        }
        if prompt.starts_with("Based on the following audio clip") {
            return Some(aig_template(prompt));
        }
        if prompt.starts_with("Below is a pair of question and response.") {
            return Some("Yes".into());
        }
        None
    }
}

/// Two answerable questions per labelled sound plus one unanswerable one,
/// one JSON object per line.
fn aig_template(prompt: &str) -> String {
    let labels: Vec<&str> = prompt
        .split("Sound of ")
        .skip(1)
        .filter_map(|seg| seg.split(" (").next())
        .map(|l| l.split(": [").next().unwrap_or(l).trim_end_matches(['.', ';']))
        .collect();
    let mut lines = Vec::new();
    for l in &labels {
        let ql = l.to_lowercase();
        lines.push(serde_json::json!({"q": format!("What sound can be heard in the clip?"), "a": format!("The sound of {ql} can be heard.")}));
        lines.push(serde_json::json!({"q": format!("Is the {ql} sound close or far away?"), "a": format!("The {ql} sound seems close to the recording device.")}));
    }
    lines.push(serde_json::json!({"q": "What brand is the device that makes the sound?", "a": "It cannot be determined from the audio what brand the device is."}));
    lines.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")
}

impl LlmClient for MockClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let nth = {
            let mut calls = self.calls.lock().expect("mock lock");
            let nth = calls.iter().filter(|c| c.as_str() == prompt).count();
            calls.push(prompt.to_string());
            nth
        };
        if let Some(responses) = self.fixtures.get(prompt) {
            return Ok(responses[nth % responses.len()].clone());
        }
        if self.templates {
            if let Some(r) = Self::template(prompt, nth) {
                return Ok(r);
            }
        }
        Err(LlmError::NoFixture(prompt.chars().take(60).collect()))
    }
}
