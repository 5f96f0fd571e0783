use std::env;
use std::time::Duration;

use serde_json::{json, Value};

use super::{LlmClient, LlmError};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Base of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    pub embedding_model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: env::var("LLM_BASE_URL").unwrap_or_else(|_| "https://api.openai.com/v1".into()),
            model: "gpt-3.5-turbo".into(),
            embedding_model: "text-embedding-ada-002".into(),
            api_key_env: "LLM_API_KEY".into(),
            temperature: 1.0,
            timeout: Duration::from_secs(120),
        }
    }
}

/// Chat-completion and embedding requests against an OpenAI-compatible API.
pub struct HttpClient {
    cfg: HttpConfig,
    key: String,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(cfg: HttpConfig) -> Result<Self, LlmError> {
        let key = env::var(&cfg.api_key_env).map_err(|_| LlmError::MissingKey(cfg.api_key_env.clone()))?;
        let agent = ureq::AgentBuilder::new().timeout(cfg.timeout).build();
        Ok(Self { cfg, key, agent })
    }

    fn post(&self, path: &str, body: Value) -> Result<Value, LlmError> {
        let url = format!("{}/{path}", self.cfg.base_url.trim_end_matches('/'));
        let resp = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.key))
            .send_json(body);
        match resp {
            Ok(r) => r.into_json().map_err(|e| LlmError::Malformed(e.to_string())),
            Err(ureq::Error::Status(status, r)) => Err(LlmError::Status {
                status,
                body: r.into_string().unwrap_or_default(),
            }),
            Err(e) => Err(LlmError::Transport(e.to_string())),
        }
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>, LlmError> {
        let v = self.post("embeddings", json!({ "model": self.cfg.embedding_model, "input": text }))?;
        v["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| LlmError::Malformed("no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| LlmError::Malformed("non-numeric embedding".into())))
            .collect()
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let v = self.post(
            "chat/completions",
            json!({
                "model": self.cfg.model,
                "temperature": self.cfg.temperature,
                "messages": [{ "role": "user", "content": prompt }],
            }),
        )?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Malformed("no choices[0].message.content".into()))
    }
}
