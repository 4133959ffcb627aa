//! Client for OpenAI-compatible `/chat/completions` and `/embeddings`
//! endpoints.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{normalize, LlmProvider, ProviderError, ProviderMode, Tier};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub fast_model: String,
    pub deep_model: String,
    pub embed_model: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is read at request time and never stored.
    #[serde(default)]
    pub api_key_env: Option<String>,
    pub dimension: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
}

fn default_timeout() -> u64 {
    120
}
fn default_retries() -> usize {
    2
}
fn default_backoff() -> u64 {
    500
}

pub struct LiveProvider {
    config: LiveConfig,
    client: Client,
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Result<Self, ProviderError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Request(e.to_string()))?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &LiveConfig {
        &self.config
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, ProviderError> {
        let url = format!("{}/{}", self.config.endpoint.trim_end_matches('/'), path);
        let key = match &self.config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::Request(format!("environment variable {var} is not set")))?),
            None => None,
        };
        let mut attempt = 0;
        loop {
            let mut req = self.client.post(&url).json(body);
            if let Some(k) = &key {
                req = req.bearer_auth(k);
            }
            let retryable = match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Value>().map_err(|e| ProviderError::BadResponse(e.to_string()));
                }
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    let err = ProviderError::Request(format!("{status}: {}", text.chars().take(300).collect::<String>()));
                    if !(status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()) {
                        return Err(err);
                    }
                    err
                }
                Err(e) => ProviderError::Request(e.to_string()),
            };
            if attempt >= self.config.max_retries {
                return Err(retryable);
            }
            std::thread::sleep(Duration::from_millis(self.config.retry_backoff_ms << attempt));
            attempt += 1;
        }
    }
}

impl LlmProvider for LiveProvider {
    fn complete(&self, prompt: &str, tier: Tier) -> Result<String, ProviderError> {
        let model = match tier {
            Tier::Fast => &self.config.fast_model,
            Tier::Deep => &self.config.deep_model,
        };
        let body = json!({
            "model": model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let v = self.post("chat/completions", &body)?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::BadResponse("missing choices[0].message.content".into()))
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError> {
        let v = self.post("embeddings", &json!({"model": self.config.embed_model, "input": text}))?;
        let raw = v
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::BadResponse("missing data[0].embedding".into()))?;
        let vec: Vec<f32> = raw.iter().map(|x| x.as_f64().map(|f| f as f32)).collect::<Option<_>>()
            .ok_or_else(|| ProviderError::BadResponse("non-numeric embedding".into()))?;
        if vec.len() != self.config.dimension {
            return Err(ProviderError::Dimension { found: vec.len(), expected: self.config.dimension });
        }
        Ok(normalize(vec))
    }

    fn mode(&self) -> ProviderMode {
        ProviderMode::Live
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embedding_family(&self) -> String {
        format!("live:{}/{}", self.config.embed_model, self.config.dimension)
    }
}
