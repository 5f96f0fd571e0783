//! Mapping free-text outputs onto a label set by embedding cosine.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, EmbeddingProvider};
use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub names: Vec<String>,
    #[serde(default)]
    pub multi_label: bool,
}

impl LabelSet {
    pub fn new(names: &[&str], multi_label: bool) -> Result<Self, EvalError> {
        let s = Self {
            names: names.iter().map(|n| n.to_string()).collect(),
            multi_label,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.names.is_empty() {
            return Err(EvalError::Empty("label set"));
        }
        let distinct: BTreeSet<&String> = self.names.iter().collect();
        if distinct.len() != self.names.len() || self.names.iter().any(|n| n.trim().is_empty()) {
            return Err(EvalError::Labels("label names must be distinct and non-empty".into()));
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub scores: Vec<f64>,
    /// Highest score, lowest label index on ties.
    pub argmax: usize,
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Label embeddings computed once and reused for every output.
pub struct LabelIndex {
    pub labels: LabelSet,
    embeddings: Vec<Vec<f64>>,
}

impl LabelIndex {
    pub fn new(labels: LabelSet, provider: &dyn EmbeddingProvider) -> Result<Self, EvalError> {
        labels.validate()?;
        let embeddings = labels
            .names
            .iter()
            .map(|n| label_embedding(n, provider))
            .collect::<Result<_, _>>()?;
        Ok(Self { labels, embeddings })
    }

    pub fn classify(&self, text: &str, provider: &dyn EmbeddingProvider) -> Result<Classification, EvalError> {
        score_against(&provider.embed(text)?, &self.embeddings)
    }
}

fn label_embedding(name: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, EvalError> {
    let e = provider.embed(name)?;
    if e.iter().all(|&x| x == 0.0) {
        return Err(EvalError::Labels(format!("label {name:?} embeds to the zero vector")));
    }
    Ok(e)
}

/// An output with no embeddable content (zero vector) scores 0 against
/// every label instead of failing.
fn score_against(e: &[f64], labels: &[Vec<f64>]) -> Result<Classification, EvalError> {
    let scores = if e.iter().all(|&x| x == 0.0) {
        vec![0.0; labels.len()]
    } else {
        labels.iter().map(|l| cosine(e, l)).collect::<Result<Vec<_>, _>>()?
    };
    Ok(Classification { argmax: argmax(&scores), scores })
}

/// Uncached single-output form.
pub fn classify_output(text: &str, labels: &LabelSet, provider: &dyn EmbeddingProvider) -> Result<Classification, EvalError> {
    labels.validate()?;
    let embs = labels
        .names
        .iter()
        .map(|n| label_embedding(n, provider))
        .collect::<Result<Vec<_>, _>>()?;
    score_against(&provider.embed(text)?, &embs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::embed::{ExactMatchProvider, HashedBowProvider};

    #[test]
    fn exact_match_dog() {
        let labels = LabelSet::new(&["cat", "dog"], false).unwrap();
        let c = classify_output("dog", &labels, &ExactMatchProvider::default()).unwrap();
        assert_eq!(c.scores, vec![0.0, 1.0]);
        assert_eq!(labels.names[c.argmax], "dog");
    }

    #[test]
    fn hashed_picks_shared_token() {
        let labels = LabelSet::new(&["dog", "siren"], false).unwrap();
        let c = classify_output("dog barking loudly", &labels, &HashedBowProvider::default()).unwrap();
        assert_eq!(c.argmax, 0);
    }

    #[test]
    fn ties_go_to_lowest_index_and_cache_agrees() {
        let labels = LabelSet::new(&["rain", "wind", "dog"], false).unwrap();
        let p = HashedBowProvider::default();
        let idx = LabelIndex::new(labels.clone(), &p).unwrap();
        for text in ["rain and wind", "a dog in the rain", "wind"] {
            let a = idx.classify(text, &p).unwrap();
            let b = classify_output(text, &labels, &p).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(idx.classify("rain and wind", &p).unwrap().argmax, 0);
    }

    #[test]
    fn wordless_output_scores_zero() {
        let labels = LabelSet::new(&["rain", "wind"], false).unwrap();
        let c = classify_output("?! ...", &labels, &HashedBowProvider::default()).unwrap();
        assert_eq!(c.scores, vec![0.0, 0.0]);
        assert_eq!(c.argmax, 0);
        let bad = LabelSet::new(&["rain", "!!"], false).unwrap();
        assert!(matches!(
            LabelIndex::new(bad, &HashedBowProvider::default()),
            Err(EvalError::Labels(_))
        ));
    }

    #[test]
    fn rejects_duplicate_labels() {
        assert!(LabelSet::new(&["a", "a"], false).is_err());
        assert!(LabelSet::new(&[], false).is_err());
    }
}
