//! Text embedding providers used to map free-text outputs onto label names.

use std::collections::HashMap;
use std::sync::Mutex;

use super::EvalError;
use crate::llm::HttpClient;

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Whether returned vectors already have unit L2 norm.
    fn normalized(&self) -> bool;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError>;
}

/// Lowercase alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Hashed bag of words: each token counted in one of `buckets` slots, then
/// L2-normalized. Text without tokens embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct HashedBowProvider {
    buckets: usize,
    synonyms: HashMap<String, String>,
}

impl Default for HashedBowProvider {
    fn default() -> Self {
        Self::new(4096)
    }
}

impl HashedBowProvider {
    pub fn new(buckets: usize) -> Self {
        Self {
            buckets: buckets.max(1),
            synonyms: HashMap::new(),
        }
    }

    /// Tokens in `pairs[i].0` are counted as `pairs[i].1` (a crude stand-in
    /// for the semantic neighbourhoods a learned embedding provides).
    pub fn with_synonyms(mut self, pairs: &[(&str, &str)]) -> Self {
        for (from, to) in pairs {
            self.synonyms.insert(from.to_lowercase(), to.to_lowercase());
        }
        self
    }
}

impl EmbeddingProvider for HashedBowProvider {
    fn name(&self) -> &str {
        "hashed-bow"
    }

    fn dimension(&self) -> usize {
        self.buckets
    }

    fn normalized(&self) -> bool {
        true
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        let mut v = vec![0.0; self.buckets];
        for t in tokenize(text) {
            let t = self.synonyms.get(&t).cloned().unwrap_or(t);
            v[(fnv1a(&t) % self.buckets as u64) as usize] += 1.0;
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

/// One-hot per distinct (trimmed) string, slots assigned on first sight.
/// Cosine is 1 between identical strings and 0 otherwise.
pub struct ExactMatchProvider {
    capacity: usize,
    slots: Mutex<HashMap<String, usize>>,
}

impl ExactMatchProvider {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            slots: Mutex::new(HashMap::new()),
        }
    }
}

impl Default for ExactMatchProvider {
    fn default() -> Self {
        Self::new(4096)
    }
}

impl EmbeddingProvider for ExactMatchProvider {
    fn name(&self) -> &str {
        "exact-match"
    }

    fn dimension(&self) -> usize {
        self.capacity
    }

    fn normalized(&self) -> bool {
        true
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        let mut slots = self.slots.lock().expect("slot table lock");
        let next = slots.len();
        let slot = *slots.entry(text.trim().to_string()).or_insert(next);
        if slot >= self.capacity {
            return Err(EvalError::Provider(format!("exact-match provider capacity {} exceeded", self.capacity)));
        }
        let mut v = vec![0.0; self.capacity];
        v[slot] = 1.0;
        Ok(v)
    }
}

/// Embeddings from an OpenAI-compatible endpoint, retried with backoff.
pub struct RemoteProvider {
    client: HttpClient,
    attempts: u32,
    dimension: usize,
}

impl RemoteProvider {
    pub fn new(client: HttpClient, dimension: usize) -> Self {
        Self { client, attempts: 3, dimension }
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn normalized(&self) -> bool {
        false
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EvalError> {
        let mut delay = std::time::Duration::from_secs(1);
        let mut last = None;
        for attempt in 1..=self.attempts {
            match self.client.embed(text) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() && attempt < self.attempts => {
                    log::warn!("embedding attempt {attempt} failed: {e}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => {
                    last = Some(e);
                    break;
                }
            }
        }
        Err(EvalError::Provider(last.map(|e| e.to_string()).unwrap_or_default()))
    }
}

/// Cosine similarity; zero-norm inputs are rejected.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::Shape(format!("embedding dims {} vs {}", a.len(), b.len())));
    }
    let (na, nb) = (a.iter().map(|x| x * x).sum::<f64>().sqrt(), b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::ZeroNorm);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}
