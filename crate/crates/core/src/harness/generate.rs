//! Model clients: an HTTP chat-completions client and a replay client.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::extract_code;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub case_id: String,
    pub sample_index: usize,
    pub raw_response: String,
    /// Empty when nothing could be extracted.
    #[serde(default)]
    pub extracted_code: String,
    #[serde(default)]
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no recorded sample {sample_index} for case {case_id}")]
    Missing { case_id: String, sample_index: usize },
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("client configuration: {0}")]
    Config(String),
}

/// A source of model completions. Shared across worker threads.
pub trait Generator: Send + Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, case_id: &str, prompt: &str, sample_index: usize) -> Result<String, ClientError>;
}

/// Draw `n` samples for one prompt, indices `0..n`.
pub fn generate_samples(
    client: &dyn Generator,
    case_id: &str,
    function: &str,
    prompt: &str,
    n: usize,
) -> Result<Vec<GenerationSample>, ClientError> {
    (0..n)
        .map(|i| {
            let raw = client.complete(case_id, prompt, i)?;
            Ok(GenerationSample {
                case_id: case_id.to_string(),
                sample_index: i,
                extracted_code: extract_code(&raw, Some(function)).unwrap_or_default(),
                raw_response: raw,
                model_id: client.model_id().to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub model: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub temperature: Option<f64>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://localhost:8000/v1/chat/completions".into(),
            token_env: "OBFUSBENCH_API_TOKEN".into(),
            model: "default".into(),
            timeout_s: 120,
            max_retries: 4,
            backoff_ms: 500,
            temperature: None,
        }
    }
}

/// Chat-completions style endpoint with retry and exponential backoff on
/// transport errors, 429 and 5xx.
pub struct HttpGenerator {
    config: HttpConfig,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(config: HttpConfig) -> HttpGenerator {
        let token = std::env::var(&config.token_env).ok().filter(|t| !t.is_empty());
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(config.timeout_s)).build();
        HttpGenerator { config, token, agent }
    }

    fn once(&self, prompt: &str) -> Result<String, ClientError> {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        if let Some(t) = self.config.temperature {
            body["temperature"] = serde_json::json!(t);
        }
        let mut req = self.agent.post(&self.config.endpoint).set("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = match req.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                return Err(ClientError::Status { status, body: r.into_string().unwrap_or_default() })
            }
            Err(e) => return Err(ClientError::Transport(e.to_string())),
        };
        let value: serde_json::Value = resp.into_json().map_err(|e| ClientError::BadResponse(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::BadResponse("missing choices[0].message.content".into()))
    }
}

fn retryable(e: &ClientError) -> bool {
    match e {
        ClientError::Status { status, .. } => *status == 429 || *status >= 500,
        ClientError::Transport(_) => true,
        _ => false,
    }
}

impl Generator for HttpGenerator {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, _case_id: &str, prompt: &str, _sample_index: usize) -> Result<String, ClientError> {
        let mut attempt = 0;
        loop {
            match self.once(prompt) {
                Err(e) if retryable(&e) && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("request failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

/// Serves recorded responses keyed by `(case_id, sample_index)`.
#[derive(Debug, Clone, Default)]
pub struct ReplayGenerator {
    model: String,
    samples: BTreeMap<(String, usize), String>,
}

impl ReplayGenerator {
    /// Load a JSON Lines file of [`GenerationSample`] records.
    pub fn load(path: &Path) -> Result<ReplayGenerator, ClientError> {
        let file = std::fs::File::open(path).map_err(|e| ClientError::Config(format!("{}: {e}", path.display())))?;
        let mut out = ReplayGenerator::default();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ClientError::Config(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let s: GenerationSample = serde_json::from_str(&line)
                .map_err(|e| ClientError::Config(format!("{}:{}: {e}", path.display(), n + 1)))?;
            out.insert(s);
        }
        Ok(out)
    }

    pub fn from_samples(samples: impl IntoIterator<Item = GenerationSample>) -> ReplayGenerator {
        let mut out = ReplayGenerator::default();
        samples.into_iter().for_each(|s| out.insert(s));
        out
    }

    fn insert(&mut self, s: GenerationSample) {
        if self.model.is_empty() {
            self.model = s.model_id.clone();
        }
        self.samples.insert((s.case_id, s.sample_index), s.raw_response);
    }
}

impl Generator for ReplayGenerator {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, case_id: &str, _prompt: &str, sample_index: usize) -> Result<String, ClientError> {
        self.samples
            .get(&(case_id.to_string(), sample_index))
            .cloned()
            .ok_or_else(|| ClientError::Missing { case_id: case_id.to_string(), sample_index })
    }
}
