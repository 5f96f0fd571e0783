//! Accuracy, micro-F1, mAP, caption token overlap and Pearson correlation.

use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;

use super::embed::tokenize;
use super::EvalError;

pub fn accuracy<T: PartialEq>(preds: &[T], truths: &[T]) -> Result<f64, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::Shape(format!("{} predictions vs {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty("accuracy"));
    }
    Ok(preds.iter().zip(truths).filter(|(p, t)| p == t).count() as f64 / preds.len() as f64)
}

/// Pools true positives, false positives and false negatives over every
/// sample's label set. Two empty pools count as perfect agreement.
pub fn micro_f1(preds: &[BTreeSet<String>], truths: &[BTreeSet<String>]) -> Result<f64, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::Shape(format!("{} predictions vs {} truths", preds.len(), truths.len())));
    }
    if preds.is_empty() {
        return Err(EvalError::Empty("micro-F1"));
    }
    let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
    for (p, t) in preds.iter().zip(truths) {
        tp += p.intersection(t).count();
        fp += p.difference(t).count();
        fneg += t.difference(p).count();
    }
    let denom = 2 * tp + fp + fneg;
    Ok(if denom == 0 { 1.0 } else { 2.0 * tp as f64 / denom as f64 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    pub map: f64,
    pub per_class: Vec<Option<f64>>,
    /// Classes with no positive sample, left out of the mean.
    pub excluded: Vec<usize>,
}

/// Average precision of one score column: samples ranked by descending
/// score, ties by ascending sample index. `None` without positives.
pub fn average_precision(scores: &[f64], truths: &[bool]) -> Option<f64> {
    let positives = truths.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut hits = 0;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if truths[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

pub fn mean_average_precision(scores: &Array2<f64>, truths: &Array2<bool>) -> Result<MapResult, EvalError> {
    if scores.dim() != truths.dim() {
        return Err(EvalError::Shape(format!("scores {:?} vs truths {:?}", scores.dim(), truths.dim())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(EvalError::Shape("non-finite score".into()));
    }
    let mut per_class = Vec::with_capacity(scores.ncols());
    let mut excluded = Vec::new();
    for c in 0..scores.ncols() {
        let s: Vec<f64> = scores.column(c).to_vec();
        let t: Vec<bool> = truths.column(c).to_vec();
        let ap = average_precision(&s, &t);
        if ap.is_none() {
            excluded.push(c);
        }
        per_class.push(ap);
    }
    let aps: Vec<f64> = per_class.iter().flatten().copied().collect();
    if aps.is_empty() {
        return Err(EvalError::Empty("mAP (no class has a positive sample)"));
    }
    if !excluded.is_empty() {
        log::warn!("mAP: {} classes without positives excluded", excluded.len());
    }
    Ok(MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        per_class,
        excluded,
    })
}

fn token_f1(pred: &[String], reference: &[String]) -> f64 {
    if pred.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in reference {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Best token-level F1 of `prediction` against any reference (lowercased,
/// punctuation stripped, clipped multiset overlap).
pub fn caption_overlap_f1(prediction: &str, references: &[String]) -> Result<f64, EvalError> {
    if references.is_empty() {
        return Err(EvalError::Empty("caption references"));
    }
    let pred = tokenize(prediction);
    Ok(references
        .iter()
        .map(|r| token_f1(&pred, &tokenize(r)))
        .fold(0.0, f64::max))
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::Shape(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(EvalError::Empty("pearson needs at least two points"));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}
