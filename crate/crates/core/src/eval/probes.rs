//! Temporal probes: which sound comes first, and how many times a sound
//! is heard.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::embed::{cosine, EmbeddingProvider};
use super::metrics::pearson;
use super::EvalError;

/// Extracts the phrase naming the sound that starts first.
pub struct OrderExtractor {
    patterns: Vec<Regex>,
}

impl Default for OrderExtractor {
    fn default() -> Self {
        Self::new(&[
            r"(?i)(?P<x>[\w\s'-]+?)\s+(?:sound\s+)?(?:starts|begins|comes|is heard|occurs|appears|happens)(?:\s+and\s+ends)?\s+first",
            r"(?i)\bfirst\s*,?\s+(?:there is|there's|we hear|you can hear|you hear|comes)\s+(?P<x>[\w\s'-]+?)(?:[,.;]|\s+(?:and|then|followed|while|before)\b|$)",
            r"(?i)(?P<x>[\w\s'-]+?)\s+(?:is|was)\s+(?:heard\s+)?first\b",
        ])
        .expect("built-in patterns compile")
    }
}

impl OrderExtractor {
    /// Each pattern must have a named group `x`.
    pub fn new(patterns: &[&str]) -> Result<Self, EvalError> {
        let patterns = patterns
            .iter()
            .map(|p| Regex::new(p).map_err(|e| EvalError::Labels(format!("bad pattern {p:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(p) = patterns.iter().find(|p| !p.capture_names().any(|n| n == Some("x"))) {
            return Err(EvalError::Labels(format!("pattern {p} lacks a group named x")));
        }
        Ok(Self { patterns })
    }

    pub fn extract(&self, answer: &str) -> Option<String> {
        for p in &self.patterns {
            if let Some(c) = p.captures(answer) {
                let mut x = c["x"].trim().to_string();
                for article in ["the ", "a ", "an "] {
                    if x.len() > article.len() && x[..article.len()].eq_ignore_ascii_case(article) {
                        x = x[article.len()..].trim().to_string();
                    }
                }
                if !x.is_empty() {
                    return Some(x);
                }
            }
        }
        None
    }
}

/// `Some(correct)` when a first-sound phrase could be extracted; `None`
/// when the answer does not follow the instruction.
pub fn order_probe(
    answer: &str,
    first_label: &str,
    second_label: &str,
    provider: &dyn EmbeddingProvider,
    extractor: &OrderExtractor,
) -> Result<Option<bool>, EvalError> {
    let Some(phrase) = extractor.extract(answer) else {
        return Ok(None);
    };
    let e = provider.embed(&phrase)?;
    let sim = |label: &str| -> Result<f64, EvalError> {
        match cosine(&e, &provider.embed(label)?) {
            Err(EvalError::ZeroNorm) => Ok(0.0),
            other => other,
        }
    };
    // a tie is not evidence for the first label
    Ok(Some(sim(first_label)? > sim(second_label)?))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderReport {
    pub total: usize,
    pub following: usize,
    pub correct: usize,
    /// Over instruction-following answers only.
    pub accuracy: Option<f64>,
    pub not_following: Vec<usize>,
}

pub fn order_probe_batch(
    items: &[(String, String, String)],
    provider: &dyn EmbeddingProvider,
    extractor: &OrderExtractor,
) -> Result<OrderReport, EvalError> {
    let mut r = OrderReport {
        total: items.len(),
        ..Default::default()
    };
    for (i, (answer, first, second)) in items.iter().enumerate() {
        match order_probe(answer, first, second, provider, extractor)? {
            Some(ok) => {
                r.following += 1;
                r.correct += ok as usize;
            }
            None => r.not_following.push(i),
        }
    }
    if r.following > 0 {
        r.accuracy = Some(r.correct as f64 / r.following as f64);
    }
    Ok(r)
}

const NUMBER_WORDS: [&str; 10] = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];

/// First integer or number word (one to ten) in the text.
pub fn parse_count(text: &str) -> Option<u32> {
    let re = Regex::new(r"(?i)\b(\d+|one|two|three|four|five|six|seven|eight|nine|ten)\b").expect("static pattern");
    let m = re.find(text)?.as_str().to_lowercase();
    m.parse()
        .ok()
        .or_else(|| NUMBER_WORDS.iter().position(|w| *w == m).map(|i| i as u32 + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingReport {
    pub parsed: Vec<Option<u32>>,
    pub pearson: f64,
    /// mean(parsed | truth 2) / mean(parsed | truth 1), when both groups exist.
    pub double_single_ratio: Option<f64>,
    pub unparseable: Vec<usize>,
}

pub fn counting_probe(answers: &[String], truths: &[u32]) -> Result<CountingReport, EvalError> {
    if answers.len() != truths.len() {
        return Err(EvalError::Shape(format!("{} answers vs {} truths", answers.len(), truths.len())));
    }
    if answers.len() < 3 {
        return Err(EvalError::Empty("counting probe needs at least three answers"));
    }
    let parsed: Vec<Option<u32>> = answers.iter().map(|a| parse_count(a)).collect();
    let unparseable: Vec<usize> = parsed.iter().enumerate().filter(|(_, p)| p.is_none()).map(|(i, _)| i).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut single, mut double) = (Vec::new(), Vec::new());
    for (p, &t) in parsed.iter().zip(truths) {
        if let Some(p) = *p {
            xs.push(p as f64);
            ys.push(t as f64);
            match t {
                1 => single.push(p as f64),
                2 => double.push(p as f64),
                _ => {}
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ratio = (!single.is_empty() && !double.is_empty() && mean(&single) > 0.0).then(|| mean(&double) / mean(&single));
    Ok(CountingReport {
        pearson: pearson(&xs, &ys)?,
        double_single_ratio: ratio,
        parsed,
        unparseable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::embed::HashedBowProvider;

    #[test]
    fn applause_example() {
        let p = HashedBowProvider::default().with_synonyms(&[("applause", "clapping")]);
        let ex = OrderExtractor::default();
        let answer = "the applause starts first, while the footsteps follow in a rhythmic pattern afterward.";
        assert_eq!(ex.extract(answer).as_deref(), Some("applause"));
        assert_eq!(order_probe(answer, "clapping", "footsteps", &p, &ex).unwrap(), Some(true));
        assert_eq!(order_probe(answer, "footsteps", "clapping", &p, &ex).unwrap(), Some(false));
    }

    #[test]
    fn closed_answer_format_and_refusals() {
        let p = HashedBowProvider::default();
        let ex = OrderExtractor::default();
        assert_eq!(ex.extract("Dog bark begins first, and Siren ends first.").as_deref(), Some("Dog bark"));
        assert_eq!(ex.extract("Siren begins and ends first.").as_deref(), Some("Siren"));
        assert_eq!(order_probe("I like turtles.", "dog", "cat", &p, &ex).unwrap(), None);
        assert_eq!(order_probe("The cat starts first.", "dog", "cat", &p, &ex).unwrap(), Some(false));
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("The bell is rung three times."), Some(3));
        assert_eq!(parse_count("I hear 12 knocks"), Some(12));
        assert_eq!(parse_count("Two dogs, then 5 more"), Some(2));
        assert_eq!(parse_count("someone"), None);
        assert_eq!(parse_count("many"), None);
    }

    #[test]
    fn counting_probe_linear() {
        let answers: Vec<String> = ["2", "four", "2 times", "4"].iter().map(|s| s.to_string()).collect();
        let r = counting_probe(&answers, &[1, 2, 1, 2]).unwrap();
        assert!((r.pearson - 1.0).abs() < 1e-12);
        assert_eq!(r.double_single_ratio, Some(2.0));
    }
}
