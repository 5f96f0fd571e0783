//! Manifest statistics: task mix, uniqueness and unanswerable share.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::types::{QAPair, TaskKind};
use super::ForgeError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskShare {
    pub count: u64,
    /// Percentage of the grand total.
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_pairs: u64,
    pub per_task: BTreeMap<TaskKind, TaskShare>,
    pub closed: TaskShare,
    pub open: TaskShare,
    /// Share of rows whose question occurs exactly once.
    pub unique_question_fraction: f64,
    pub unique_answer_fraction: f64,
    /// Distinct questions over rows.
    pub distinct_question_fraction: f64,
    pub distinct_answer_fraction: f64,
    pub unanswerable_fraction: f64,
}

fn share(count: u64, total: u64) -> TaskShare {
    TaskShare {
        count,
        percent: 100.0 * count as f64 / total as f64,
    }
}

/// Fractions of entries that occur exactly once, and of distinct entries.
fn uniqueness<'a>(items: impl Iterator<Item = &'a str>, total: usize) -> (f64, f64) {
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for s in items {
        *counts.entry(s).or_default() += 1;
    }
    let once = counts.values().filter(|&&c| c == 1).count();
    (once as f64 / total as f64, counts.len() as f64 / total as f64)
}

fn mix(counts: &BTreeMap<TaskKind, u64>) -> Result<(u64, BTreeMap<TaskKind, TaskShare>, TaskShare, TaskShare), ForgeError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(ForgeError::EmptyManifest);
    }
    let per_task = counts.iter().map(|(&t, &c)| (t, share(c, total))).collect();
    let closed: u64 = counts.iter().filter(|(t, _)| t.is_closed()).map(|(_, c)| c).sum();
    Ok((total, per_task, share(closed, total), share(total - closed, total)))
}

/// Task mix from bare counts (uniqueness and unanswerable fractions are
/// unknown here and reported as zero).
pub fn stats_from_task_counts(counts: &BTreeMap<TaskKind, u64>) -> Result<DatasetStats, ForgeError> {
    let (total_pairs, per_task, closed, open) = mix(counts)?;
    Ok(DatasetStats {
        total_pairs,
        per_task,
        closed,
        open,
        unique_question_fraction: 0.0,
        unique_answer_fraction: 0.0,
        distinct_question_fraction: 0.0,
        distinct_answer_fraction: 0.0,
        unanswerable_fraction: 0.0,
    })
}

pub fn compute_dataset_stats(manifest: &[QAPair]) -> Result<DatasetStats, ForgeError> {
    if manifest.is_empty() {
        return Err(ForgeError::EmptyManifest);
    }
    let mut counts = BTreeMap::new();
    for p in manifest {
        *counts.entry(p.task).or_insert(0u64) += 1;
    }
    let (total_pairs, per_task, closed, open) = mix(&counts)?;
    let n = manifest.len();
    let (uq, dq) = uniqueness(manifest.iter().map(|p| p.question.as_str()), n);
    let (ua, da) = uniqueness(manifest.iter().map(|p| p.answer.as_str()), n);
    Ok(DatasetStats {
        total_pairs,
        per_task,
        closed,
        open,
        unique_question_fraction: uq,
        unique_answer_fraction: ua,
        distinct_question_fraction: dq,
        distinct_answer_fraction: da,
        unanswerable_fraction: manifest.iter().filter(|p| p.unanswerable).count() as f64 / n as f64,
    })
}
