//! Text-completion clients: a plain HTTP client for OpenAI-compatible chat
//! endpoints, retry and rate-limit wrappers, and an offline mock that serves
//! recorded fixtures and records every prompt it sees.

mod http;
mod mock;

use std::collections::VecDeque;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

pub use http::{HttpClient, HttpConfig};
pub use mock::{MockClient, ReplayFixture};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("missing API key in environment variable {0}")]
    MissingKey(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("server returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no fixture for prompt starting {0:?}")]
    NoFixture(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<LlmError> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Errors worth retrying; a missing key or fixture will not fix itself.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport(_) | LlmError::Malformed(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// One prompt in, one completion out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

impl<C: LlmClient + ?Sized> LlmClient for &C {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }
}

/// Retries transient failures with exponential backoff (`base`, `2·base`, ...).
pub struct RetryingClient<C> {
    inner: C,
    attempts: u32,
    base_delay: Duration,
}

impl<C: LlmClient> RetryingClient<C> {
    pub const DEFAULT_ATTEMPTS: u32 = 3;

    pub fn new(inner: C) -> Self {
        Self::with_policy(inner, Self::DEFAULT_ATTEMPTS, Duration::from_secs(1))
    }

    pub fn with_policy(inner: C, attempts: u32, base_delay: Duration) -> Self {
        Self {
            inner,
            attempts: attempts.max(1),
            base_delay,
        }
    }

    pub fn inner(&self) -> &C {
        &self.inner
    }
}

impl<C: LlmClient> LlmClient for RetryingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let mut delay = self.base_delay;
        let mut attempt = 1;
        loop {
            match self.inner.complete(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_transient() && attempt < self.attempts => {
                    log::warn!("completion attempt {attempt} failed: {e}; retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) if attempt > 1 || e.is_transient() => {
                    return Err(LlmError::Exhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Allows at most `per_minute` requests in any sliding 60 s window.
pub struct RateLimitedClient<C> {
    inner: C,
    per_minute: usize,
    sent: Mutex<VecDeque<Instant>>,
}

impl<C: LlmClient> RateLimitedClient<C> {
    pub fn new(inner: C, per_minute: usize) -> Self {
        Self {
            inner,
            per_minute: per_minute.max(1),
            sent: Mutex::new(VecDeque::new()),
        }
    }

    fn wait_for_slot(&self) {
        let window = Duration::from_secs(60);
        loop {
            let mut sent = self.sent.lock().expect("rate limiter lock");
            let now = Instant::now();
            while sent.front().is_some_and(|t| now.duration_since(*t) >= window) {
                sent.pop_front();
            }
            if sent.len() < self.per_minute {
                sent.push_back(now);
                return;
            }
            let wait = window - now.duration_since(*sent.front().expect("non-empty window"));
            drop(sent);
            thread::sleep(wait);
        }
    }
}

impl<C: LlmClient> LlmClient for RateLimitedClient<C> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        self.wait_for_slot();
        self.inner.complete(prompt)
    }
}
