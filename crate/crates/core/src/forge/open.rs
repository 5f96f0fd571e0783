//! Open-ended generation: one or more prompts per clip, sized by how rich
//! the clip's meta is.

use super::aig::{build_aig_prompt, parse_aig_response_with, UnanswerableDetector};
use super::types::{AudioMeta, QAPair};
use super::ForgeError;
use crate::llm::LlmClient;

/// Pairs requested for a clip: `ceil(10 × richness)`.
pub fn open_quota(m: &AudioMeta) -> usize {
    (10.0 * m.richness()).ceil() as usize
}

#[derive(Debug, Clone, Default)]
pub struct OpenReport {
    pub pairs: Vec<QAPair>,
    pub parse_warnings: usize,
    pub client_calls: usize,
}

/// Calls the client `ceil(quota / 10)` times per clip (clips in ascending
/// id order) and keeps at most `quota` parsed pairs per clip.
pub fn forge_open(metas: &[AudioMeta], client: &dyn LlmClient, detector: &UnanswerableDetector) -> Result<OpenReport, ForgeError> {
    let mut sorted: Vec<&AudioMeta> = metas.iter().collect();
    sorted.sort_by(|a, b| a.audio_id.cmp(&b.audio_id));
    let mut report = OpenReport::default();
    for m in sorted {
        m.validate()?;
        let quota = open_quota(m);
        let prompt = build_aig_prompt(m);
        let mut got = Vec::new();
        for _ in 0..quota.div_ceil(10) {
            report.client_calls += 1;
            let text = client.complete(&prompt)?;
            let parsed = parse_aig_response_with(&m.audio_id, &text, detector)?;
            report.parse_warnings += parsed.warnings;
            got.extend(parsed.pairs);
        }
        got.truncate(quota);
        report.pairs.extend(got);
    }
    Ok(report)
}
