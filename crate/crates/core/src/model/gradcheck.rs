//! Central-difference verification of analytic gradients on a sample of
//! entries from every trainable tensor.

use ndarray::ArrayViewD;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::audio_lm::{AudioLm, TrainableSet, TrainingExample};
use super::ModelError;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Replaces every adapter `B` (zero at init) with small Gaussian values so
/// the `A` gradients are not trivially zero.
pub fn perturb_adapters(model: &mut AudioLm, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).expect("positive std");
    for (name, t) in model.decoder.adapter_tensors_mut() {
        if name.ends_with("lora_b") {
            t.mapv_inplace(|_| normal.sample(&mut rng));
        }
    }
}

fn with_entry(model: &mut AudioLm, set: TrainableSet, tensor: usize, index: usize, f: impl FnOnce(&mut f64)) {
    let mut tensors = model.trainable_tensors_mut(set);
    let (_, t) = &mut tensors[tensor];
    f(t.iter_mut().nth(index).expect("index in range"));
}

/// Compares analytic gradients with `(L(θ+ε) - L(θ-ε)) / 2ε` on up to
/// `per_tensor` randomly chosen entries of each trainable tensor.
pub fn finite_diff_check(
    model: &AudioLm,
    example: &TrainingExample,
    set: TrainableSet,
    per_tensor: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport, ModelError> {
    let (_, grads) = model.loss_and_grads(example, set)?;
    let named: Vec<(String, ArrayViewD<'_, f64>)> = grads.named();
    let mut work = model.clone();
    let sizes: Vec<(String, usize)> = work
        .trainable_tensors_mut(set)
        .iter()
        .map(|(n, t)| (n.clone(), t.len()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (ti, (name, len)) in sizes.iter().enumerate() {
        let g = &named
            .iter()
            .find(|(n, _)| n == name)
            .ok_or_else(|| ModelError::Shape(format!("missing gradient for {name}")))?
            .1;
        let mut picks = sample(&mut rng, *len, per_tensor.min(*len)).into_vec();
        picks.sort_unstable();
        for idx in picks {
            let analytic = *g.iter().nth(idx).expect("gradient matches tensor");
            let mut orig = 0.0;
            with_entry(&mut work, set, ti, idx, |v| {
                orig = *v;
                *v = orig + eps;
            });
            let plus = work.loss(example)?;
            with_entry(&mut work, set, ti, idx, |v| *v = orig - eps);
            let minus = work.loss(example)?;
            with_entry(&mut work, set, ti, idx, |v| *v = orig);
            let numeric = (plus - minus) / (2.0 * eps);
            entries.push(GradCheckEntry {
                tensor: name.clone(),
                index: idx,
                analytic,
                numeric,
                rel_error: relative_error(analytic, numeric),
            });
        }
    }
    Ok(GradCheckReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-12);
    }
}
