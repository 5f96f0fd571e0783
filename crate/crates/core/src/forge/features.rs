//! Per-class acoustic-feature descriptions, generated through an LLM client
//! and cached on disk.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{write_atomic, ForgeError};
use crate::llm::LlmClient;

pub const DESCRIPTIONS_PER_CLASS: usize = 10;

pub fn feature_prompt(class: &str) -> String {
    format!("describe the acoustic characteristic of {class} sound precisely with a sentence less than 10 words")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureBank {
    pub classes: BTreeMap<String, Vec<String>>,
}

impl FeatureBank {
    pub fn load(path: &Path) -> Result<Self, ForgeError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| ForgeError::Format(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), ForgeError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| ForgeError::Format(e.to_string()))?;
        write_atomic(path, text.as_bytes())
    }

    pub fn is_complete(&self, class: &str) -> bool {
        self.classes.get(class).is_some_and(|d| d.len() == DESCRIPTIONS_PER_CLASS)
    }

    pub fn descriptions(&self, class: &str) -> Option<&[String]> {
        self.classes.get(class).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FeatureBankReport {
    pub bank: FeatureBank,
    /// Classes that could not be completed, with the client error.
    pub missing: Vec<(String, String)>,
    /// Descriptions longer than ten words (kept, but flagged).
    pub long_descriptions: usize,
    pub client_calls: usize,
}

/// Fills in ten descriptions for every class not already complete in the
/// cache at `cache` (when given), saving after each finished class.
pub fn gen_feature_bank(classes: &[String], client: &dyn LlmClient, cache: Option<&Path>) -> Result<FeatureBankReport, ForgeError> {
    let mut report = FeatureBankReport::default();
    if let Some(p) = cache.filter(|p| p.exists()) {
        report.bank = FeatureBank::load(p)?;
    }
    for class in classes {
        if report.bank.is_complete(class) {
            continue;
        }
        let prompt = feature_prompt(class);
        let mut descs = Vec::with_capacity(DESCRIPTIONS_PER_CLASS);
        let mut failure = None;
        for _ in 0..DESCRIPTIONS_PER_CLASS {
            report.client_calls += 1;
            match client.complete(&prompt) {
                Ok(text) => {
                    let d = text.trim().trim_matches('"').trim().to_string();
                    if d.split_whitespace().count() > 10 {
                        log::warn!("feature description for {class} exceeds ten words: {d:?}");
                        report.long_descriptions += 1;
                    }
                    descs.push(d);
                }
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        match failure {
            Some(err) => {
                log::error!("feature bank: giving up on {class}: {err}");
                report.missing.push((class.clone(), err));
            }
            None => {
                report.bank.classes.insert(class.clone(), descs);
                if let Some(p) = cache {
                    report.bank.save(p)?;
                }
            }
        }
    }
    Ok(report)
}
