//! The `ltu` command line: argument definitions, dispatch and exit codes.

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audio::AudioError;
use crate::curriculum::CurriculumError;
use crate::eval::EvalError;
use crate::forge::ForgeError;
use crate::llm::LlmError;
use crate::model::ModelError;

/// Exit code for bad flags or invalid input data.
pub const EXIT_VALIDATION: i32 = 1;
/// Exit code for I/O, client and other runtime failures.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ForgeError> for CliError {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Io(_) | ForgeError::Llm(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Audio(a) => a.into(),
            ModelError::Io(_) | ModelError::Checkpoint(_) | ModelError::NonFinite(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Llm(_) | EvalError::Provider(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<CurriculumError> for CliError {
    fn from(e: CurriculumError) -> Self {
        match e {
            CurriculumError::Model(m) => m.into(),
            CurriculumError::Forge(f) => f.into(),
            CurriculumError::Io(_) | CurriculumError::Diverged { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ltu", version, about = "Audio question-answering toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct LlmArgs {
    /// Serve every LLM call offline (fixtures first, then built-in templates).
    #[arg(long)]
    pub mock_llm: bool,
    /// JSON-lines replay fixtures `{prompt, response}` for --mock-llm.
    #[arg(long, requires = "mock_llm")]
    pub fixtures: Option<PathBuf>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "LLM_API_KEY")]
    pub api_key_env: String,
    /// Client-side request cap per minute.
    #[arg(long, default_value_t = 60)]
    pub rate_limit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    Hashed,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Small batch, scaled learning rate, gradient clipping.
    Desk,
    /// Batch 256, unscaled rates, no clipping.
    Full,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic corpus: meta.jsonl plus one WAV per clip.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rule-based closed-ended QA from meta information.
    ForgeClosed {
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// LLM-generated open-ended QA from meta information.
    ForgeOpen {
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Acoustic-feature descriptions per class; resumes from an existing --out.
    ForgeFeatures {
        /// One class label per line.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Class-balanced selection of audio ids.
    SampleAudioset {
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Task mix and uniqueness statistics of a QA manifest.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a QA manifest line by line.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run the staged curriculum on a QA manifest.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `<audio_id>.wav` for every row.
        #[arg(long)]
        audio_dir: PathBuf,
        /// Output checkpoint directory (stage checkpoints go in subdirectories).
        #[arg(long)]
        ckpt: PathBuf,
        /// Curriculum file; defaults to the built-in four stages.
        #[arg(long)]
        curriculum: Option<PathBuf>,
        /// Sample-budget factor (default: desk factor for the built-in curriculum, 1 for a file).
        #[arg(long)]
        factor: Option<f64>,
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        lr_scale: Option<f64>,
        /// Start from this checkpoint instead of a fresh model.
        #[arg(long)]
        init_ckpt: Option<PathBuf>,
        /// Stage reports (JSON lines); defaults to `<ckpt>/reports.jsonl`.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Answer a question about one clip, or every row of a manifest.
    Answer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
        audio: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        question: Option<String>,
        /// QA manifest; answers every row, reading audio from --audio-dir.
        #[arg(long, requires = "audio_dir")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        audio_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        temperature: f64,
        #[arg(long, default_value_t = 500)]
        top_k: usize,
        #[arg(long, default_value_t = 0.95)]
        top_p: f64,
        #[arg(long, default_value_t = 1.1)]
        repetition_penalty: f64,
        #[arg(long, default_value_t = 96)]
        max_new_tokens: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Map free-text outputs to labels and score accuracy, F1 and mAP.
    EvalClassify {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// One label per line.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        multi_label: bool,
        #[arg(long, value_enum, default_value_t = ProviderKind::Hashed)]
        provider: ProviderKind,
        #[arg(long, default_value = "LLM_API_KEY")]
        api_key_env: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Token-overlap caption score.
    EvalCaption {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// LLM-judged instruction-following rate.
    EvalJudge {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        llm: LlmArgs,
    },
    /// Temporal order and counting probes.
    Probe {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value_t = ProviderKind::Hashed)]
        provider: ProviderKind,
        #[arg(long, default_value = "LLM_API_KEY")]
        api_key_env: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { 0 };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
