//! Audio Instruction Generation: meta serialization, the generation prompt,
//! response parsing and unanswerable-answer detection.

use serde_json::Value;

use super::closed::format_span;
use super::types::{AudioMeta, QAPair, TaskKind};
use super::ForgeError;

/// Instruction block sent ahead of the serialized meta.
pub const AIG_INSTRUCTIONS: &str = "Based on the following audio clip, generate 10 different types of complex open-ended questions that require step-by-step thinking, and corresponding step-by-step answers.
The following information is provided: the sound events appear in the audio clip, together with its acoustic features, and corresponding onset and offset time stamps. A description of the content of the audio clip is also provided.
Questions should be about the audio, e.g., which sound event is recognized and why (e.g., based on its acoustic feature), what can be inferred based on the combination of sound events; the temporal relationship between the sound events and what can be inferred from that; the potential scenario that such an audio clip could happen, if the audio clip is special (e.g., urgent, funny, interesting, abnormal, unique, etc) and why, what mood or atmosphere this audio clip conveys, etc.
The more complex and diverse the question, the better.
Format each QA pair in a single line as a JSON dictionary (key \"q\" for question, and \"a\" for answer, wrapped with { and }). Do not include any other explanation.";

/// `Sound Events: Sound of {label} ({feature}): [{on}s-{off}s]; ... . Description: {caption}`
///
/// The feature and timestamp clauses are dropped when absent; a clip with
/// captions but no events yields only the description sentence.
pub fn serialize_meta(m: &AudioMeta) -> String {
    let mut out = String::new();
    if !m.events.is_empty() {
        let segs: Vec<String> = m
            .ordered_events()
            .iter()
            .map(|e| {
                let mut s = format!("Sound of {}", e.label);
                if let Some(f) = e.feature.as_deref().filter(|f| !f.trim().is_empty()) {
                    s.push_str(&format!(" ({})", f.trim()));
                }
                if let Some((on, off)) = e.span() {
                    s.push_str(&format!(": {}", format_span(on, off)));
                }
                s
            })
            .collect();
        out.push_str("Sound Events: ");
        out.push_str(&segs.join("; "));
        out.push('.');
    }
    let caps: Vec<&str> = m.captions.iter().map(|c| c.trim()).filter(|c| !c.is_empty()).collect();
    if !caps.is_empty() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str("Description: ");
        out.push_str(&caps.join(" "));
    }
    out
}

pub fn build_aig_prompt(m: &AudioMeta) -> String {
    format!("{AIG_INSTRUCTIONS}\n{}", serialize_meta(m))
}

/// Case-insensitive substring patterns marking an answer as "not
/// determinable from the audio".
#[derive(Debug, Clone, PartialEq)]
pub struct UnanswerableDetector {
    patterns: Vec<String>,
}

impl Default for UnanswerableDetector {
    fn default() -> Self {
        Self::new(&[
            "cannot be determined from the audio",
            "not provide enough information",
            "impossible to tell from the audio",
        ])
    }
}

impl UnanswerableDetector {
    pub fn new(patterns: &[&str]) -> Self {
        Self {
            patterns: patterns.iter().map(|p| p.to_lowercase()).collect(),
        }
    }

    pub fn is_unanswerable(&self, answer: &str) -> bool {
        let a = answer.to_lowercase();
        self.patterns.iter().any(|p| a.contains(p.as_str()))
    }
}

pub fn detect_unanswerable(answer: &str) -> bool {
    UnanswerableDetector::default().is_unanswerable(answer)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AigParse {
    pub pairs: Vec<QAPair>,
    /// Objects skipped for lacking a non-empty string `q` or `a`.
    pub warnings: usize,
}

fn parse_error(text: &str, start: usize, end: usize, reason: String) -> ForgeError {
    let line = text[..start].matches('\n').count() + 1;
    let span: String = text[start..end.min(text.len())].chars().take(80).collect();
    ForgeError::AigParse { line, span, reason }
}

/// Byte index just past the `}` closing the object opened at `start`.
fn object_end(text: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(start + i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Folds line breaks inside string literals (hard-wrapped output) into single spaces.
fn unwrap_strings(obj: &str) -> String {
    let mut out = String::with_capacity(obj.len());
    let mut in_str = false;
    let mut escaped = false;
    let mut chars = obj.chars().peekable();
    while let Some(c) = chars.next() {
        if in_str && !escaped && (c == '\n' || c == '\r') {
            while out.ends_with(' ') || out.ends_with('\t') {
                out.pop();
            }
            while chars.peek().is_some_and(|n| n.is_whitespace()) {
                chars.next();
            }
            out.push(' ');
            continue;
        }
        if in_str {
            match (escaped, c) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
        } else if c == '"' {
            in_str = true;
        }
        out.push(c);
    }
    out
}

/// Accepts a JSON array of `{"q","a"}` objects, one object per line, or
/// either inside code fences. Between objects only brackets, commas,
/// whitespace and ellipses are tolerated.
pub fn parse_aig_response_with(audio_id: &str, text: &str, detector: &UnanswerableDetector) -> Result<AigParse, ForgeError> {
    let mut pairs = Vec::new();
    let mut warnings = 0;
    let mut i = 0;
    let bytes = text.as_bytes();
    while i < text.len() {
        let rest = &text[i..];
        if rest.starts_with("```") {
            // skip the fence line, including any language tag
            i += rest.find('\n').map(|n| n + 1).unwrap_or(rest.len());
            continue;
        }
        let c = rest.chars().next().expect("non-empty rest");
        if c == '{' {
            let end = object_end(text, i)
                .ok_or_else(|| parse_error(text, i, text.len(), "unterminated object".into()))?;
            let raw = &text[i..end];
            let value: Value = serde_json::from_str(&unwrap_strings(raw))
                .map_err(|e| parse_error(text, i, end, format!("invalid JSON object: {e}")))?;
            let field = |k: &str| value.get(k).and_then(Value::as_str).map(str::trim).filter(|s| !s.is_empty());
            match (field("q"), field("a")) {
                (Some(q), Some(a)) => pairs.push(QAPair {
                    audio_id: audio_id.to_string(),
                    question: q.to_string(),
                    answer: a.to_string(),
                    task: TaskKind::OpenEnded,
                    closed: false,
                    unanswerable: detector.is_unanswerable(a),
                }),
                _ => {
                    log::warn!("skipping generated object without q/a: {}", raw.chars().take(60).collect::<String>());
                    warnings += 1;
                }
            }
            i = end;
        } else if c.is_whitespace() || matches!(c, '[' | ']' | ',' | '.' | '…') {
            i += c.len_utf8();
        } else {
            let end = (i..text.len()).find(|&j| bytes[j] == b'\n').unwrap_or(text.len());
            return Err(parse_error(text, i, end, format!("unexpected {c:?} outside a JSON object")));
        }
    }
    Ok(AigParse { pairs, warnings })
}

pub fn parse_aig_response(audio_id: &str, text: &str) -> Result<AigParse, ForgeError> {
    parse_aig_response_with(audio_id, text, &UnanswerableDetector::default())
}
