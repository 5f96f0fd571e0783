//! Dataset-level scoring over prediction and truth JSON-lines files.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize};

use super::classify::{LabelIndex, LabelSet};
use super::embed::EmbeddingProvider;
use super::judge::{judge_batch, JudgeReport};
use super::metrics::{accuracy, caption_overlap_f1, mean_average_precision, micro_f1};
use super::probes::{counting_probe, order_probe_batch, CountingReport, OrderExtractor, OrderReport};
use super::EvalError;
use crate::llm::LlmClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub audio_id: String,
    pub question: String,
    pub output: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub audio_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Option::is_none")]
    pub caption: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    /// `[first, second]` sound labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<[String; 2]>,
    /// Sound class the count refers to (groups counting results).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<String>>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum V {
        One(String),
        Many(Vec<String>),
    }
    Ok(Option::<V>::deserialize(d)?.map(|v| match v {
        V::One(s) => vec![s],
        V::Many(v) => v,
    }))
}

/// Pairs each prediction with its truth row; unmatched predictions are
/// returned by id.
fn join<'a>(preds: &'a [Prediction], truths: &'a [Truth]) -> (Vec<(&'a Prediction, &'a Truth)>, Vec<String>) {
    let by_id: HashMap<&str, &Truth> = truths.iter().map(|t| (t.audio_id.as_str(), t)).collect();
    let mut joined = Vec::new();
    let mut missing = Vec::new();
    for p in preds {
        match by_id.get(p.audio_id.as_str()) {
            Some(t) => joined.push((p, *t)),
            None => missing.push(p.audio_id.clone()),
        }
    }
    (joined, missing)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub provider: String,
    /// Question the outputs were produced with, when uniform.
    pub prompt: Option<String>,
    pub samples: usize,
    pub accuracy: Option<f64>,
    pub micro_f1: f64,
    pub map: f64,
    pub excluded_classes: Vec<String>,
    pub excluded_samples: Vec<String>,
}

pub fn eval_classify(
    preds: &[Prediction],
    truths: &[Truth],
    labels: &LabelSet,
    provider: &dyn EmbeddingProvider,
) -> Result<ClassifyReport, EvalError> {
    let index = LabelIndex::new(labels.clone(), provider)?;
    let (joined, mut excluded_samples) = join(preds, truths);
    let mut rows = Vec::new();
    for (p, t) in joined {
        match &t.labels {
            Some(ls) if !ls.is_empty() => rows.push((p, ls)),
            _ => excluded_samples.push(p.audio_id.clone()),
        }
    }
    if rows.is_empty() {
        return Err(EvalError::Empty("no prediction has a label truth"));
    }
    let n = labels.names.len();
    let mut scores = Array2::zeros((rows.len(), n));
    let mut onehot = Array2::from_elem((rows.len(), n), false);
    let (mut pred_sets, mut truth_sets) = (Vec::new(), Vec::new());
    let (mut pred_top, mut truth_top) = (Vec::new(), Vec::new());
    for (i, (p, ls)) in rows.iter().enumerate() {
        let c = index.classify(&p.output, provider)?;
        for (j, s) in c.scores.iter().enumerate() {
            scores[[i, j]] = *s;
        }
        for l in ls.iter() {
            let j = labels
                .index_of(l)
                .ok_or_else(|| EvalError::Labels(format!("truth label {l:?} for {} not in label set", p.audio_id)))?;
            onehot[[i, j]] = true;
        }
        let predicted = labels.names[c.argmax].clone();
        pred_sets.push(BTreeSet::from([predicted.clone()]));
        truth_sets.push(ls.iter().cloned().collect::<BTreeSet<_>>());
        pred_top.push(predicted);
        truth_top.push(ls[0].clone());
    }
    let map = mean_average_precision(&scores, &onehot)?;
    let questions: BTreeSet<&str> = rows.iter().map(|(p, _)| p.question.as_str()).collect();
    Ok(ClassifyReport {
        provider: provider.name().to_string(),
        prompt: (questions.len() == 1).then(|| questions.into_iter().next().unwrap_or_default().to_string()),
        samples: rows.len(),
        accuracy: if labels.multi_label { None } else { Some(accuracy(&pred_top, &truth_top)?) },
        micro_f1: micro_f1(&pred_sets, &truth_sets)?,
        map: map.map,
        excluded_classes: map.excluded.iter().map(|&c| labels.names[c].clone()).collect(),
        excluded_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionReport {
    pub samples: usize,
    pub mean_overlap_f1: f64,
    pub per_sample: Vec<(String, f64)>,
    pub excluded_samples: Vec<String>,
}

pub fn eval_caption(preds: &[Prediction], truths: &[Truth]) -> Result<CaptionReport, EvalError> {
    let (joined, mut excluded_samples) = join(preds, truths);
    let mut per_sample = Vec::new();
    for (p, t) in joined {
        match &t.caption {
            Some(refs) if !refs.is_empty() => per_sample.push((p.audio_id.clone(), caption_overlap_f1(&p.output, refs)?)),
            _ => excluded_samples.push(p.audio_id.clone()),
        }
    }
    if per_sample.is_empty() {
        return Err(EvalError::Empty("no prediction has a caption truth"));
    }
    Ok(CaptionReport {
        samples: per_sample.len(),
        mean_overlap_f1: per_sample.iter().map(|s| s.1).sum::<f64>() / per_sample.len() as f64,
        per_sample,
        excluded_samples,
    })
}

pub fn eval_judge(preds: &[Prediction], client: &dyn LlmClient) -> Result<JudgeReport, EvalError> {
    let pairs: Vec<(String, String)> = preds.iter().map(|p| (p.question.clone(), p.output.clone())).collect();
    judge_batch(&pairs, client)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub order: Option<OrderReport>,
    /// Per sound class (or `"all"` when truths carry no class).
    pub counting: BTreeMap<String, CountingReport>,
    pub counting_skipped: BTreeMap<String, String>,
}

pub fn eval_probes(
    preds: &[Prediction],
    truths: &[Truth],
    provider: &dyn EmbeddingProvider,
    extractor: &OrderExtractor,
) -> Result<ProbeReport, EvalError> {
    let (joined, _) = join(preds, truths);
    let order_items: Vec<(String, String, String)> = joined
        .iter()
        .filter_map(|(p, t)| t.order.as_ref().map(|[a, b]| (p.output.clone(), a.clone(), b.clone())))
        .collect();
    let order = if order_items.is_empty() {
        None
    } else {
        Some(order_probe_batch(&order_items, provider, extractor)?)
    };
    let mut groups: BTreeMap<String, (Vec<String>, Vec<u32>)> = BTreeMap::new();
    for (p, t) in &joined {
        if let Some(c) = t.count {
            let g = groups.entry(t.class.clone().unwrap_or_else(|| "all".into())).or_default();
            g.0.push(p.output.clone());
            g.1.push(c);
        }
    }
    let mut counting = BTreeMap::new();
    let mut counting_skipped = BTreeMap::new();
    for (class, (answers, counts)) in groups {
        match counting_probe(&answers, &counts) {
            Ok(r) => {
                counting.insert(class, r);
            }
            Err(e) => {
                counting_skipped.insert(class, e.to_string());
            }
        }
    }
    Ok(ProbeReport { order, counting, counting_skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::embed::ExactMatchProvider;

    fn pred(id: &str, out: &str) -> Prediction {
        Prediction { audio_id: id.into(), question: "What is it?".into(), output: out.into() }
    }

    fn truth(id: &str, label: &str) -> Truth {
        Truth { audio_id: id.into(), labels: Some(vec![label.into()]), ..Default::default() }
    }

    #[test]
    fn verbatim_labels_score_perfectly() {
        let labels = LabelSet::new(&["cat", "dog", "siren"], false).unwrap();
        let preds = vec![pred("1", "dog"), pred("2", "siren"), pred("3", "cat"), pred("4", "dog")];
        let truths = vec![truth("1", "dog"), truth("2", "siren"), truth("3", "cat"), truth("4", "dog")];
        let r = eval_classify(&preds, &truths, &labels, &ExactMatchProvider::default()).unwrap();
        assert_eq!(r.accuracy, Some(1.0));
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.map, 1.0);
        assert_eq!(r.prompt.as_deref(), Some("What is it?"));
    }

    #[test]
    fn caption_truth_accepts_string() {
        let t: Truth = serde_json::from_str(r#"{"audio_id":"a","caption":"a dog barks"}"#).unwrap();
        let r = eval_caption(&[pred("a", "a dog barks")], &[t]).unwrap();
        assert_eq!(r.mean_overlap_f1, 1.0);
    }
}
