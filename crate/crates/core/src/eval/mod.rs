//! Scoring free-text outputs: label mapping by embedding cosine, standard
//! metrics, caption overlap, LLM judging and temporal probes.

mod classify;
mod embed;
mod judge;
mod metrics;
mod probes;
mod report;

pub use classify::{classify_output, Classification, LabelIndex, LabelSet};
pub use embed::{cosine, tokenize, EmbeddingProvider, ExactMatchProvider, HashedBowProvider, RemoteProvider};
pub use judge::{judge_batch, judge_instruction_following, judge_prompt, parse_verdict, JudgeReport, Verdict, JUDGE_INSTRUCTION};
pub use metrics::{accuracy, average_precision, caption_overlap_f1, mean_average_precision, micro_f1, pearson, MapResult};
pub use probes::{
    counting_probe, order_probe, order_probe_batch, parse_count, CountingReport, OrderExtractor, OrderReport,
};
pub use report::{
    eval_caption, eval_classify, eval_judge, eval_probes, CaptionReport, ClassifyReport, Prediction, ProbeReport, Truth,
};

use crate::llm::LlmError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("zero-norm embedding")]
    ZeroNorm,
    #[error("zero variance")]
    ZeroVariance,
    #[error("label set: {0}")]
    Labels(String),
    #[error("embedding provider: {0}")]
    Provider(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}
