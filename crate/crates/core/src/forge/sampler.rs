//! Class-balanced clip selection: rare classes weigh more.

use std::collections::BTreeMap;

use super::ForgeError;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerWeights {
    /// `w_k = 1 / count_k`
    pub class_weights: BTreeMap<String, f64>,
    /// `w_a = Σ_{k ∈ labels(a)} w_k`, summed over the audio's distinct labels in ascending order.
    pub audio_weights: BTreeMap<String, f64>,
}

pub fn sampler_weights(
    label_counts: &BTreeMap<String, u64>,
    labels_of: &BTreeMap<String, Vec<String>>,
) -> Result<SamplerWeights, ForgeError> {
    let mut class_weights = BTreeMap::new();
    for (k, &c) in label_counts {
        if c == 0 {
            return Err(ForgeError::Config(format!("class {k:?} has zero count")));
        }
        class_weights.insert(k.clone(), 1.0 / c as f64);
    }
    let mut audio_weights = BTreeMap::new();
    for (a, labels) in labels_of {
        let mut ls: Vec<&String> = labels.iter().collect();
        ls.sort();
        ls.dedup();
        let mut w = 0.0;
        for l in ls {
            w += class_weights
                .get(l)
                .ok_or_else(|| ForgeError::Config(format!("audio {a:?} has label {l:?} missing from the counts")))?;
        }
        audio_weights.insert(a.clone(), w);
    }
    Ok(SamplerWeights { class_weights, audio_weights })
}

/// The `n` audios with the largest weight, ties by ascending id.
pub fn sample_audioset(
    label_counts: &BTreeMap<String, u64>,
    labels_of: &BTreeMap<String, Vec<String>>,
    n: usize,
) -> Result<Vec<String>, ForgeError> {
    if n > labels_of.len() {
        return Err(ForgeError::Config(format!("asked for {n} audios but only {} exist", labels_of.len())));
    }
    let w = sampler_weights(label_counts, labels_of)?;
    let mut ranked: Vec<(&String, f64)> = w.audio_weights.iter().map(|(a, &w)| (a, w)).collect();
    ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    Ok(ranked.into_iter().take(n).map(|(a, _)| a.clone()).collect())
}
