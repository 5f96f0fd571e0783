//! Staged training: per-stage trainable sets, task filters, sample budgets
//! and a warmup + linear-decay learning-rate schedule.

mod file;
mod schedule;
mod trainer;

pub use file::{load_curriculum, parse_curriculum, save_curriculum, to_toml};
pub use schedule::{lr_at, warmup_steps, TrainerConfig, DESK_FACTOR};
pub use trainer::{build_examples, run_curriculum, run_stage, stage_seed, write_reports, StageReport, TaggedExample};

use serde::{Deserialize, Serialize};

use crate::forge::{ForgeError, QAPair, TaskKind};
use crate::model::{ModelError, TrainableSet};

#[derive(Debug, thiserror::Error)]
pub enum CurriculumError {
    #[error("invalid curriculum: {0}")]
    Config(String),
    #[error("stage {stage} ({tasks:?}) matches no rows out of {total}")]
    EmptyStage { stage: u32, tasks: TaskFilter, total: usize },
    #[error("stage {} diverged at step {}: loss {loss}", report.stage, report.steps)]
    Diverged { report: Box<StageReport>, loss: f64 },
    #[error("no audio for {0}")]
    MissingAudio(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Forge(#[from] ForgeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which task kinds a stage trains on, in increasing openness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFilter {
    ClfAndDesc,
    AllClosed,
    All,
}

impl TaskFilter {
    pub fn admits(self, task: TaskKind) -> bool {
        match self {
            TaskFilter::ClfAndDesc => matches!(task, TaskKind::Classification | TaskKind::AcousticFeatures),
            TaskFilter::AllClosed => task.is_closed(),
            TaskFilter::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: u32,
    pub trainable: TrainableSet,
    pub tasks: TaskFilter,
    pub n_samples: u64,
    pub lr: f64,
    pub epochs: u32,
}

pub fn default_curriculum() -> Vec<StageConfig> {
    let row = |stage, trainable, tasks, n_samples, lr, epochs| StageConfig {
        stage,
        trainable,
        tasks,
        n_samples,
        lr,
        epochs,
    };
    use TaskFilter::*;
    use TrainableSet::*;
    vec![
        row(1, ProjectionOnly, ClfAndDesc, 1_200_000, 1e-3, 2),
        row(2, AllNonLm, ClfAndDesc, 1_200_000, 1e-4, 2),
        row(3, AllNonLm, AllClosed, 1_900_000, 1e-4, 1),
        row(4, AllNonLm, All, 5_600_000, 1e-4, 1),
    ]
}

/// Checks stage numbering, the stage-1 projection-only rule and
/// non-decreasing task openness.
pub fn validate_curriculum(c: &[StageConfig]) -> Result<(), CurriculumError> {
    if c.is_empty() {
        return Err(CurriculumError::Config("no stages".into()));
    }
    for (i, s) in c.iter().enumerate() {
        let bad = |msg: &str| Err(CurriculumError::Config(format!("stage {}: {msg}", s.stage)));
        if s.stage != i as u32 + 1 {
            return bad(&format!("expected stage number {}", i + 1));
        }
        if s.n_samples == 0 || s.epochs == 0 {
            return bad("n_samples and epochs must be positive");
        }
        if !(s.lr > 0.0 && s.lr.is_finite()) {
            return bad("lr must be positive");
        }
        let expected = if s.stage == 1 { TrainableSet::ProjectionOnly } else { TrainableSet::AllNonLm };
        if s.trainable != expected {
            return bad(&format!("trainable set must be {expected:?}"));
        }
        if i > 0 && s.tasks < c[i - 1].tasks {
            return bad("task openness decreases");
        }
    }
    Ok(())
}

/// Scales every sample budget by `factor` (floored, at least 1).
pub fn scale_curriculum(c: &[StageConfig], factor: f64) -> Result<Vec<StageConfig>, CurriculumError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(CurriculumError::Config(format!("scale factor {factor} outside (0, 1]")));
    }
    Ok(c.iter()
        .map(|s| StageConfig {
            n_samples: ((s.n_samples as f64 * factor).floor() as u64).max(1),
            ..s.clone()
        })
        .collect())
}

pub fn filter_tasks<'a>(rows: &'a [QAPair], s: &StageConfig) -> Result<Vec<&'a QAPair>, CurriculumError> {
    let kept: Vec<&QAPair> = rows.iter().filter(|r| s.tasks.admits(r.task)).collect();
    if kept.is_empty() {
        return Err(CurriculumError::EmptyStage {
            stage: s.stage,
            tasks: s.tasks,
            total: rows.len(),
        });
    }
    Ok(kept)
}
