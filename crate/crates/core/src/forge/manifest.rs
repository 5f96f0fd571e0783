//! JSON-lines IO for metas and QA manifests, plus schema validation.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use super::types::{QAPair, TaskKind};
use super::{write_atomic, ForgeError};

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ForgeError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ForgeError::Format(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> Result<String, ForgeError> {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).map_err(|e| ForgeError::Format(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Atomic write (temp file, then rename).
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ForgeError> {
    write_atomic(path, to_jsonl(rows)?.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub rows: usize,
    pub violations: Vec<Violation>,
}

const FIELDS: [&str; 6] = ["audio_id", "question", "answer", "task", "closed", "unanswerable"];

fn check_line(line: &str) -> Result<(), String> {
    let v: Value = serde_json::from_str(line).map_err(|e| format!("not JSON: {e}"))?;
    let obj = v.as_object().ok_or("not a JSON object")?;
    for f in FIELDS {
        if !obj.contains_key(f) {
            return Err(format!("missing field {f:?}"));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(format!("unexpected field {extra:?}"));
    }
    let task = obj["task"].as_str().ok_or("task is not a string")?;
    task.parse::<TaskKind>().map_err(|_| format!("unknown task kind {task:?}"))?;
    let pair: QAPair = serde_json::from_value(v.clone()).map_err(|e| format!("bad field type: {e}"))?;
    pair.validate()
}

/// One violation per offending line (the first problem found on it).
pub fn validate_manifest_text(text: &str) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        report.rows += 1;
        if let Err(message) = check_line(line) {
            report.violations.push(Violation { line: i + 1, message });
        }
    }
    report
}

pub fn validate_manifest(path: &Path) -> Result<ValidationReport, ForgeError> {
    Ok(validate_manifest_text(&fs::read_to_string(path)?))
}
