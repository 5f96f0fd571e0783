//! Waveform → fbank → 16x16 patches → patch embeddings → 32 pooled tokens.

mod encoder;
mod fbank;
mod patch;
mod wav;

pub use encoder::{
    encode_patches, pool_tokens, project_tokens, AudioTokenSequence, EmbeddingGrid, PatchEncoder,
    PatchEncoderGrads, ProjectionGrads, ProjectionLayer, CLIP_SECONDS,
};
pub(crate) use encoder::{pool_rows, unpool_rows};
pub use fbank::{
    compute_fbank, hann_window, hz_to_mel, load_spectrogram, mel_center_frequencies,
    mel_filterbank, mel_to_hz, save_spectrogram, FbankConfig, FbankExtractor, LogMelSpectrogram,
};
pub use patch::{patchify, patchify_with, PatchGrid, PATCH_SIDE};
pub use wav::{read_wav, write_wav, Waveform, SAMPLE_RATE_HZ};

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("sample rate must be 16000 Hz, got {0}")]
    SampleRate(u32),
    #[error("empty waveform")]
    Empty,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("waveform has {samples} samples, need more than one {window}-sample window")]
    TooShort { samples: usize, window: usize },
    #[error("invalid fbank config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported audio format: {0}")]
    Format(String),
    #[error(transparent)]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Stateless front half of the audio path: waveform to patch grid.
pub struct AudioFrontend {
    extractor: FbankExtractor,
}

impl AudioFrontend {
    pub fn new(cfg: FbankConfig) -> Result<Self, AudioError> {
        Ok(Self {
            extractor: FbankExtractor::new(cfg)?,
        })
    }

    pub fn fbank(&self, wave: &Waveform) -> Result<LogMelSpectrogram, AudioError> {
        self.extractor.compute(wave)
    }

    pub fn patches(&self, wave: &Waveform) -> Result<PatchGrid, AudioError> {
        patchify(&self.extractor.compute(wave)?)
    }
}

impl Default for AudioFrontend {
    fn default() -> Self {
        Self::new(FbankConfig::default()).expect("default fbank config is valid")
    }
}
