//! The stage loop: draw order, batching, SGD steps and reports.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{lr_at, TrainerConfig};
use super::{validate_curriculum, CurriculumError, StageConfig};
use crate::audio::PatchGrid;
use crate::forge::{write_jsonl, QAPair, TaskKind};
use crate::model::{save_checkpoint, AudioLm, ByteTokenizer, ModelError, TrainingExample};

/// A training example that remembers which task produced it.
#[derive(Debug, Clone)]
pub struct TaggedExample {
    pub audio_id: String,
    pub task: TaskKind,
    pub example: TrainingExample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: u32,
    pub steps: u64,
    pub batch_size: usize,
    pub n_samples: u64,
    pub filtered_rows: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epoch_mean_loss: Vec<f64>,
    pub step_losses: Vec<f64>,
    pub wall_time_s: f64,
}

/// Tokenizes QA pairs against their audio. Rows whose answer is cut off
/// entirely by `text_cutoff` are skipped and their ids returned.
pub fn build_examples(
    pairs: &[QAPair],
    audio: &HashMap<String, Arc<PatchGrid>>,
    text_cutoff: usize,
) -> Result<(Vec<TaggedExample>, Vec<String>), CurriculumError> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut skipped = Vec::new();
    for p in pairs {
        let grid = audio
            .get(&p.audio_id)
            .ok_or_else(|| CurriculumError::MissingAudio(p.audio_id.clone()))?;
        let (ids, mask) = ByteTokenizer.encode_pair(&p.question, &p.answer, text_cutoff);
        match TrainingExample::new(grid.clone(), ids, mask) {
            Ok(example) => out.push(TaggedExample {
                audio_id: p.audio_id.clone(),
                task: p.task,
                example,
            }),
            Err(ModelError::EmptyMask) => skipped.push(p.audio_id.clone()),
            Err(e) => return Err(e.into()),
        }
    }
    Ok((out, skipped))
}

/// Seed for one epoch of one stage.
pub fn stage_seed(seed: u64, stage: u32, epoch: u32) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((stage as u64) << 32 | epoch as u64)
}

/// `n` indices into `0..len`: whole shuffled passes, the last one cut short.
fn draw_order(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut pass: Vec<usize> = (0..len).collect();
        pass.shuffle(rng);
        pass.truncate(n - out.len());
        out.extend(pass);
    }
    out
}

pub fn run_stage(
    model: &mut AudioLm,
    rows: &[TaggedExample],
    s: &StageConfig,
    cfg: &TrainerConfig,
) -> Result<StageReport, CurriculumError> {
    cfg.validate()?;
    let start = Instant::now();
    let filtered: Vec<&TaggedExample> = rows.iter().filter(|r| s.tasks.admits(r.task)).collect();
    if filtered.is_empty() {
        return Err(CurriculumError::EmptyStage {
            stage: s.stage,
            tasks: s.tasks,
            total: rows.len(),
        });
    }
    if let Some(r) = filtered.iter().find(|r| r.example.text_tokens.len() > cfg.text_cutoff) {
        return Err(CurriculumError::Config(format!(
            "{} has {} text tokens, cutoff is {}",
            r.audio_id,
            r.example.text_tokens.len(),
            cfg.text_cutoff
        )));
    }
    let n = usize::try_from(s.n_samples).map_err(|_| CurriculumError::Config("n_samples too large".into()))?;
    let steps_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let total_steps = steps_per_epoch * s.epochs as u64;
    let mut report = StageReport {
        stage: s.stage,
        steps: 0,
        batch_size: cfg.batch_size,
        n_samples: s.n_samples,
        filtered_rows: filtered.len(),
        initial_loss: f64::NAN,
        final_loss: f64::NAN,
        epoch_mean_loss: Vec::with_capacity(s.epochs as usize),
        step_losses: Vec::with_capacity(total_steps as usize),
        wall_time_s: 0.0,
    };
    for epoch in 0..s.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(cfg.seed, s.stage, epoch));
        let order = draw_order(filtered.len(), n, &mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &filtered[i].example).collect();
            let lr = lr_at(report.steps, total_steps, cfg, s.lr)? * cfg.lr_scale;
            let (loss, mut grads) = model.batch_loss_and_grads(&batch, s.trainable)?;
            report.steps += 1;
            report.step_losses.push(loss);
            let norm = grads.global_norm();
            if !loss.is_finite() || !norm.is_finite() {
                report.wall_time_s = start.elapsed().as_secs_f64();
                return Err(CurriculumError::Diverged {
                    report: Box::new(report),
                    loss,
                });
            }
            if let Some(max) = cfg.max_grad_norm {
                if norm > max {
                    grads.scale(max / norm);
                }
            }
            model.sgd_step(&grads, lr, s.trainable)?;
            weighted += loss * chunk.len() as f64;
        }
        let mean = weighted / n as f64;
        log::info!("stage {} epoch {}/{}: mean loss {mean:.4}", s.stage, epoch + 1, s.epochs);
        report.epoch_mean_loss.push(mean);
    }
    report.initial_loss = report.step_losses[0];
    report.final_loss = *report.step_losses.last().unwrap_or(&f64::NAN);
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs every stage in order on the same model, checkpointing into
/// `ckpt_dir/stage-<n>` after each one when a directory is given.
pub fn run_curriculum(
    model: &mut AudioLm,
    rows: &[TaggedExample],
    stages: &[StageConfig],
    cfg: &TrainerConfig,
    ckpt_dir: Option<&Path>,
) -> Result<Vec<StageReport>, CurriculumError> {
    validate_curriculum(stages)?;
    let mut reports = Vec::with_capacity(stages.len());
    for s in stages {
        let r = run_stage(model, rows, s, cfg)?;
        log::info!(
            "stage {} done: {} steps, loss {:.4} -> {:.4}, {:.1}s",
            r.stage,
            r.steps,
            r.initial_loss,
            r.final_loss,
            r.wall_time_s
        );
        if let Some(dir) = ckpt_dir {
            save_checkpoint(model, &dir.join(format!("stage-{}", s.stage)))?;
        }
        reports.push(r);
    }
    Ok(reports)
}

pub fn write_reports(path: &Path, reports: &[StageReport]) -> Result<(), CurriculumError> {
    Ok(write_jsonl(path, reports)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draw_order_cycles_whole_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = draw_order(5, 12, &mut rng);
        assert_eq!(d.len(), 12);
        for pass in d.chunks(5).take(2) {
            let mut p = pass.to_vec();
            p.sort();
            assert_eq!(p, vec![0, 1, 2, 3, 4]);
        }
        let d = draw_order(5, 3, &mut rng);
        let mut u = d.clone();
        u.dedup();
        assert_eq!(u.len(), 3);
    }
}
