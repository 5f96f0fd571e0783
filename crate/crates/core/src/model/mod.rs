//! Frozen decoder with low-rank query/key adapters, the audio-conditioned
//! language model around it, losses, sampling and checkpoints.

mod alignment;
mod audio_lm;
mod checkpoint;
mod config;
mod decoder;
mod gradcheck;
mod lora;
mod loss;
mod sampling;
mod tensor;
mod tokenizer;

pub use alignment::{alignment_losses, contrastive_loss, mse_loss, AlignmentBatch, AlignmentLosses};
pub use audio_lm::{AudioLm, Gradients, TrainableSet, TrainingExample};
pub use checkpoint::{load_adapters, load_checkpoint, save_adapters, save_checkpoint};
pub use config::{AudioLmConfig, DecoderConfig, LoraTarget, MAX_INSTANTIABLE_D_MODEL};
pub use decoder::{decoder_forward, Decoder, DecoderGrads, DecoderLayer, LayerLoraGrads};
pub use gradcheck::{finite_diff_check, perturb_adapters, relative_error, GradCheckEntry, GradCheckReport};
pub use lora::{count_lora_params, LoraGrads, LoraLinear};
pub use loss::{next_token_loss, next_token_loss_grad, shifted_targets};
pub use sampling::{
    apply_repetition_penalty, argmax, generate, truncated_distribution, GenerationConfig, Sampler,
};
pub use tensor::{log_sum_exp, softmax};
pub use tokenizer::{ByteTokenizer, BOS, EOS, PAD, SEP, VOCAB_SIZE};

use crate::audio::AudioError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("sequence of {len} positions exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("zero-norm {0}")]
    ZeroNorm(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
