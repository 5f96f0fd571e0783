use serde::{Deserialize, Serialize};

use super::tokenizer::VOCAB_SIZE;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoraTarget {
    Query,
    Key,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
    pub lora_targets: Vec<LoraTarget>,
}

/// Largest decoder that may actually be allocated; bigger configs are
/// geometry presets for shape and parameter-count arithmetic only.
pub const MAX_INSTANTIABLE_D_MODEL: usize = 1024;

impl DecoderConfig {
    /// Desk-scale default: 4 layers, 4 heads, width 64, 32 audio + 160 text positions.
    pub fn toy() -> Self {
        Self {
            n_layers: 4,
            n_heads: 4,
            d_model: 64,
            d_ff: 256,
            vocab_size: VOCAB_SIZE,
            max_seq_len: 192,
            lora_rank: 8,
            lora_alpha: 16.0,
            lora_targets: vec![LoraTarget::Query, LoraTarget::Key],
        }
    }

    /// LLaMA-7B shape with rank-8 query/key adapters. Not instantiable.
    pub fn llama_7b_geometry() -> Self {
        Self {
            n_layers: 32,
            n_heads: 32,
            d_model: 4096,
            d_ff: 11008,
            vocab_size: 32_000,
            max_seq_len: 2048,
            lora_rank: 8,
            lora_alpha: 16.0,
            lora_targets: vec![LoraTarget::Query, LoraTarget::Key],
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn has_target(&self, t: LoraTarget) -> bool {
        self.lora_targets.contains(&t)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_layers == 0 || self.n_heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(ModelError::Config("layer, head and width counts must be positive".into()));
        }
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.lora_rank == 0 {
            return Err(ModelError::Config("LoRA rank must be at least 1".into()));
        }
        let mut seen = self.lora_targets.clone();
        seen.dedup();
        if seen.len() != self.lora_targets.len() {
            return Err(ModelError::Config("duplicate LoRA target".into()));
        }
        if self.vocab_size == 0 || self.max_seq_len == 0 {
            return Err(ModelError::Config("vocab and max_seq_len must be positive".into()));
        }
        Ok(())
    }

    pub fn validate_instantiable(&self) -> Result<(), ModelError> {
        self.validate()?;
        if self.d_model > MAX_INSTANTIABLE_D_MODEL {
            return Err(ModelError::Config(format!(
                "d_model {} is a geometry preset and cannot be instantiated",
                self.d_model
            )));
        }
        Ok(())
    }
}

/// Geometry of the audio path feeding the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioLmConfig {
    pub decoder: DecoderConfig,
    pub d_audio: usize,
    pub patch_values: usize,
    pub time_patches: usize,
    pub freq_patches: usize,
}

impl AudioLmConfig {
    pub fn toy() -> Self {
        Self {
            decoder: DecoderConfig::toy(),
            d_audio: 64,
            patch_values: 256,
            time_patches: 64,
            freq_patches: 8,
        }
    }

    pub fn n_patches(&self) -> usize {
        self.time_patches * self.freq_patches
    }

    pub fn n_audio_tokens(&self) -> usize {
        self.time_patches / 2
    }

    pub fn max_text_len(&self) -> usize {
        self.decoder.max_seq_len.saturating_sub(self.n_audio_tokens())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.decoder.validate_instantiable()?;
        if self.time_patches == 0 || self.time_patches % 2 != 0 {
            return Err(ModelError::Config("time_patches must be even and positive".into()));
        }
        if self.d_audio == 0 || self.patch_values == 0 || self.freq_patches == 0 {
            return Err(ModelError::Config("audio dimensions must be positive".into()));
        }
        if self.n_audio_tokens() >= self.decoder.max_seq_len {
            return Err(ModelError::Config("no room for text after the audio prefix".into()));
        }
        Ok(())
    }
}
