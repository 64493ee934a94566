use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{l2_normalize, Provider, ProviderError};

pub const ENV_API_BASE: &str = "CLAIMRANK_API_BASE";
pub const ENV_API_KEY: &str = "CLAIMRANK_API_KEY";

const BODY_EXCERPT_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub max_in_flight: usize,
    /// Base delay before the first retry; doubles on each further attempt.
    pub backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "http://localhost:11434".into(),
            api_key: None,
            chat_model: "gemma2".into(),
            embed_model: "mxbai-embed-large".into(),
            timeout: 60.0,
            max_retries: 2,
            temperature: 0.0,
            max_in_flight: 4,
            backoff_ms: 500,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return Err(ProviderError::Config(format!(
                "timeout must be positive, got {}",
                self.timeout
            )));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::Config(format!(
                "temperature must lie in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        reqwest::Url::parse(&self.base_url)
            .map_err(|e| ProviderError::Config(format!("base_url `{}`: {e}", self.base_url)))?;
        Ok(())
    }

    /// Overrides base URL and key from `CLAIMRANK_API_BASE` / `CLAIMRANK_API_KEY`.
    pub fn apply_env(&mut self) {
        if let Ok(base) = std::env::var(ENV_API_BASE) {
            if !base.is_empty() {
                self.base_url = base;
            }
        }
        if let Ok(key) = std::env::var(ENV_API_KEY) {
            if !key.is_empty() {
                self.api_key = Some(key);
            }
        }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/v1/{path}", self.base_url.trim_end_matches('/'))
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self.backoff_ms.saturating_mul(1 << attempt.min(16));
        let jitter = if self.backoff_ms > 0 {
            rand::rng().random_range(0..self.backoff_ms)
        } else {
            0
        };
        Duration::from_millis(base + jitter)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    stream: bool,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: Option<String>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
    index: Option<usize>,
}

/// Blocking client for OpenAI-compatible `/v1/chat/completions` and
/// `/v1/embeddings` endpoints.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    config: ProviderConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpProvider { config, client })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let url = self.config.endpoint(path);
        let mut attempt = 0;
        loop {
            match self.post_once(&url, body) {
                Ok(resp) => return Ok(resp),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff(attempt);
                    log::warn!("{url}: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn post_once<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, ProviderError> {
        let mut request = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(transport_error)?;
        let status = response.status();
        let text = response.text().map_err(transport_error)?;
        if !status.is_success() {
            return Err(ProviderError::Status {
                status: status.as_u16(),
                body: text.chars().take(BODY_EXCERPT_CHARS).collect(),
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| ProviderError::Protocol(format!("malformed response: {e}")))
    }
}

fn transport_error(e: reqwest::Error) -> ProviderError {
    if e.is_timeout() {
        ProviderError::Timeout
    } else {
        ProviderError::Transport(e.to_string())
    }
}

impl Provider for HttpProvider {
    fn chat(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        let mut messages = Vec::with_capacity(2);
        if !system.is_empty() {
            messages.push(ChatMessage {
                role: "system",
                content: system,
            });
        }
        messages.push(ChatMessage {
            role: "user",
            content: user,
        });
        let request = ChatRequest {
            model: &self.config.chat_model,
            messages,
            temperature: self.config.temperature,
            stream: false,
        };
        let response: ChatResponse = self.post("chat/completions", &request)?;
        response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Protocol("response has no completion content".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let request = EmbedRequest {
            model: &self.config.embed_model,
            input: texts,
        };
        let response: EmbedResponse = self.post("embeddings", &request)?;
        if response.data.len() != texts.len() {
            return Err(ProviderError::Protocol(format!(
                "sent {} inputs, received {} embeddings",
                texts.len(),
                response.data.len()
            )));
        }
        let mut slots: Vec<Option<Vec<f64>>> = vec![None; texts.len()];
        for (position, datum) in response.data.into_iter().enumerate() {
            let index = datum.index.unwrap_or(position);
            match slots.get_mut(index) {
                Some(slot @ None) => *slot = Some(datum.embedding),
                _ => {
                    return Err(ProviderError::Protocol(format!(
                        "bad or repeated embedding index {index}"
                    )))
                }
            }
        }
        let mut vectors: Vec<Vec<f64>> = slots
            .into_iter()
            .map(|v| v.expect("all slots filled"))
            .collect();
        let dim = vectors[0].len();
        if dim == 0 {
            return Err(ProviderError::Protocol(
                "endpoint returned empty embeddings".into(),
            ));
        }
        for v in &mut vectors {
            if v.len() != dim {
                return Err(ProviderError::Protocol(format!(
                    "embedding dimension mismatch within batch: {} vs {dim}",
                    v.len()
                )));
            }
            l2_normalize(v)?;
        }
        Ok(vectors)
    }

    fn max_in_flight(&self) -> usize {
        self.config.max_in_flight
    }
}
