//! Autoregressive decoding with repetition penalty, temperature, top-k and
//! top-p, applied in that order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::audio_lm::AudioLm;
use super::tokenizer::EOS;
use super::ModelError;
use crate::audio::PatchGrid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_k: usize,
    pub top_p: f64,
    pub repetition_penalty: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            top_k: 500,
            top_p: 0.95,
            repetition_penalty: 1.1,
            max_new_tokens: 96,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn greedy() -> Self {
        Self {
            temperature: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::Config(format!("top_p must be in (0, 1], got {}", self.top_p)));
        }
        if self.top_k == 0 {
            return Err(ModelError::Config("top_k must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ModelError::Config("temperature must be >= 0".into()));
        }
        if !(self.repetition_penalty > 0.0) {
            return Err(ModelError::Config("repetition penalty must be > 0".into()));
        }
        Ok(())
    }
}

/// CTRL-style penalty: positive logits of already emitted ids are divided by
/// `penalty`, negative ones multiplied.
pub fn apply_repetition_penalty(logits: &mut [f64], emitted: &[u32], penalty: f64) {
    let mut seen = vec![false; logits.len()];
    for &id in emitted {
        let i = id as usize;
        if i >= logits.len() || seen[i] {
            continue;
        }
        seen[i] = true;
        let l = &mut logits[i];
        *l = if *l > 0.0 { *l / penalty } else { *l * penalty };
    }
}

/// Lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Candidate `(id, probability)` pairs after temperature, top-k and top-p,
/// sorted by descending probability and renormalized. `temperature` must be
/// positive.
pub fn truncated_distribution(logits: &[f64], temperature: f64, top_k: usize, top_p: f64) -> Vec<(usize, f64)> {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<(usize, f64)> = scaled.iter().map(|&s| (s - m).exp()).enumerate().collect();
    let z: f64 = probs.iter().map(|p| p.1).sum();
    for p in &mut probs {
        p.1 /= z;
    }
    // stable: equal probabilities keep ascending id order
    probs.sort_by(|a, b| b.1.total_cmp(&a.1));
    probs.truncate(top_k.max(1));

    let mut cum = 0.0;
    let mut keep = probs.len();
    for (i, p) in probs.iter().enumerate() {
        cum += p.1;
        if cum >= top_p {
            keep = i + 1;
            break;
        }
    }
    probs.truncate(keep);
    let z: f64 = probs.iter().map(|p| p.1).sum();
    for p in &mut probs {
        p.1 /= z;
    }
    probs
}

/// Seeded next-token chooser.
pub struct Sampler {
    cfg: GenerationConfig,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(cfg: GenerationConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(Self { cfg, rng })
    }

    pub fn next_token(&mut self, logits: &[f64], emitted: &[u32]) -> u32 {
        let mut adjusted = logits.to_vec();
        if self.cfg.repetition_penalty != 1.0 {
            apply_repetition_penalty(&mut adjusted, emitted, self.cfg.repetition_penalty);
        }
        if self.cfg.temperature == 0.0 {
            return argmax(&adjusted) as u32;
        }
        let dist = truncated_distribution(&adjusted, self.cfg.temperature, self.cfg.top_k, self.cfg.top_p);
        let r: f64 = self.rng.gen();
        let mut cum = 0.0;
        for &(id, p) in &dist {
            cum += p;
            if r < cum {
                return id as u32;
            }
        }
        dist.last().map(|&(id, _)| id as u32).unwrap_or(0)
    }
}

/// Decodes up to `max_new_tokens` ids after `prompt`, stopping at EOS (not
/// included) or when the context is full.
pub fn generate(model: &AudioLm, audio: &PatchGrid, prompt: &[u32], cfg: &GenerationConfig) -> Result<Vec<u32>, ModelError> {
    let mut sampler = Sampler::new(cfg.clone())?;
    if cfg.max_new_tokens == 0 {
        return Ok(Vec::new());
    }
    let prefix = model.audio_tokens(audio)?;
    let room = model.cfg.max_text_len();
    let mut ids = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < cfg.max_new_tokens && ids.len() < room {
        let (logits, _) = model.decoder.forward(&prefix.tokens, &ids, true)?;
        let last = logits.row(logits.nrows() - 1).to_vec();
        let next = sampler.next_token(&last, &out);
        if next == EOS {
            break;
        }
        out.push(next);
        ids.push(next);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_hand_case() {
        let mut l = vec![2.0, 1.0];
        apply_repetition_penalty(&mut l, &[0], 1.1);
        assert_eq!(l, vec![2.0 / 1.1, 1.0]);
        let mut n = vec![-2.0, 1.0];
        apply_repetition_penalty(&mut n, &[0, 0], 1.1);
        assert_eq!(n, vec![-2.0 * 1.1, 1.0]);
    }

    #[test]
    fn zero_temperature_is_argmax() {
        let mut s = Sampler::new(GenerationConfig {
            temperature: 0.0,
            repetition_penalty: 1.0,
            ..GenerationConfig::default()
        })
        .unwrap();
        assert_eq!(s.next_token(&[0.1, 3.0, 3.0, -1.0], &[]), 1);
    }

    #[test]
    fn top_p_keeps_minimal_prefix() {
        // probabilities 0.5, 0.3, 0.2
        let logits = [0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        let d = truncated_distribution(&logits, 1.0, 10, 0.79);
        assert_eq!(d.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0, 1]);
        assert!((d.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d[0].1 - 0.625).abs() < 1e-12);
        let d = truncated_distribution(&logits, 1.0, 10, 0.5);
        assert_eq!(d.len(), 1);
        let d = truncated_distribution(&logits, 1.0, 2, 1.0);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(GenerationConfig { top_p: 0.0, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig { top_k: 0, ..Default::default() }.validate().is_err());
        assert!(GenerationConfig { temperature: -1.0, ..Default::default() }.validate().is_err());
        GenerationConfig::default().validate().unwrap();
    }
}
