//! HTTP clients for OpenAI-compatible chat completion and embedding
//! endpoints. Endpoints, model names and keys come from the environment.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::embed::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::engine::{GenerationParams, LlmProvider, ProviderError};

pub const LLM_URL_VAR: &str = "RAGFORGE_LLM_URL";
pub const LLM_KEY_VAR: &str = "RAGFORGE_LLM_KEY";
pub const EMBED_URL_VAR: &str = "RAGFORGE_EMBED_URL";
pub const EMBED_KEY_VAR: &str = "RAGFORGE_EMBED_KEY";
pub const EMBED_MODEL_VAR: &str = "RAGFORGE_EMBED_MODEL";
pub const EMBED_DIM_VAR: &str = "RAGFORGE_EMBED_DIM";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    /// Full URL of the completion or embedding route.
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Endpoint {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Endpoint {
            url: url.into(),
            key: None,
            model: model.into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }

    pub fn with_key(mut self, key: Option<String>) -> Self {
        self.key = key.filter(|k| !k.is_empty());
        self
    }

    fn from_lookup(
        lookup: &dyn Fn(&str) -> Option<String>,
        url_var: &str,
        key_var: &str,
        model: String,
    ) -> Result<Self, String> {
        let url = lookup(url_var)
            .filter(|u| !u.is_empty())
            .ok_or_else(|| format!("{url_var} is not set"))?;
        Ok(Endpoint::new(url, model).with_key(lookup(key_var)))
    }

    /// Chat endpoint from `RAGFORGE_LLM_URL` / `RAGFORGE_LLM_KEY`.
    pub fn llm_from_env(model: impl Into<String>) -> Result<Self, ProviderError> {
        Self::from_lookup(&|k| std::env::var(k).ok(), LLM_URL_VAR, LLM_KEY_VAR, model.into())
            .map_err(ProviderError::Config)
    }

    /// Embedding endpoint from `RAGFORGE_EMBED_URL` / `RAGFORGE_EMBED_KEY`,
    /// plus the model name and dimension variables.
    pub fn embed_from_env() -> Result<(Self, usize), EmbedError> {
        let lookup = |k: &str| std::env::var(k).ok();
        let model = lookup(EMBED_MODEL_VAR).unwrap_or_else(|| "text-embedding-ada-002".into());
        let dim = match lookup(EMBED_DIM_VAR) {
            Some(d) => d
                .parse::<usize>()
                .ok()
                .filter(|d| *d > 0)
                .ok_or_else(|| EmbedError::Request(format!("{EMBED_DIM_VAR} must be a positive integer")))?,
            None => 1536,
        };
        let ep = Self::from_lookup(&lookup, EMBED_URL_VAR, EMBED_KEY_VAR, model)
            .map_err(EmbedError::Request)?;
        Ok((ep, dim))
    }
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    current: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.current.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            current: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.current.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }

    pub fn in_flight(&self) -> usize {
        *self.current.lock().unwrap_or_else(|e| e.into_inner())
    }
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn post_json(
    agent: &ureq::Agent,
    ep: &Endpoint,
    body: serde_json::Value,
) -> Result<serde_json::Value, (bool, String)> {
    let mut req = agent.post(&ep.url).set("Content-Type", "application/json");
    if let Some(key) = &ep.key {
        req = req
            .set("Authorization", &format!("Bearer {key}"))
            .set("api-key", key);
    }
    match req.send_json(body) {
        Ok(resp) => resp
            .into_json::<serde_json::Value>()
            .map_err(|e| (false, e.to_string())),
        Err(ureq::Error::Status(code, resp)) => {
            let text = resp.into_string().unwrap_or_default();
            Err((true, format!("HTTP {code}: {}", text.chars().take(300).collect::<String>())))
        }
        Err(e) => Err((true, e.to_string())),
    }
}

/// Chat-completions client.
pub struct RemoteLlm {
    name: String,
    endpoint: Endpoint,
    agent: ureq::Agent,
    limiter: InFlightLimiter,
}

impl RemoteLlm {
    pub fn new(endpoint: Endpoint) -> Self {
        RemoteLlm {
            name: endpoint.model.clone(),
            agent: agent(endpoint.timeout),
            limiter: InFlightLimiter::new(endpoint.max_in_flight),
            endpoint,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: Option<String>,
}

impl LlmProvider for RemoteLlm {
    fn name(&self) -> &str {
        &self.name
    }

    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_new_tokens {
            body["max_tokens"] = json!(max);
        }
        let value = {
            let _permit = self.limiter.acquire();
            post_json(&self.agent, &self.endpoint, body).map_err(|(request, msg)| {
                if request {
                    ProviderError::Request(msg)
                } else {
                    ProviderError::BadResponse(msg)
                }
            })?
        };
        let parsed: ChatResponse =
            serde_json::from_value(value).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::BadResponse("no choices in response".into()))
    }
}

/// Embeddings client. Returned vectors are re-normalized to unit length.
pub struct RemoteEmbedder {
    endpoint: Endpoint,
    dim: usize,
    agent: ureq::Agent,
    limiter: InFlightLimiter,
}

impl RemoteEmbedder {
    pub fn new(endpoint: Endpoint, dim: usize) -> Self {
        RemoteEmbedder {
            agent: agent(endpoint.timeout),
            limiter: InFlightLimiter::new(endpoint.max_in_flight),
            endpoint,
            dim,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.endpoint.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.endpoint.model, "input": texts });
        let value = {
            let _permit = self.limiter.acquire();
            post_json(&self.agent, &self.endpoint, body).map_err(|(request, msg)| {
                if request {
                    EmbedError::Request(msg)
                } else {
                    EmbedError::BadResponse(msg)
                }
            })?
        };
        let mut parsed: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| EmbedError::BadResponse(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::CountMismatch {
                expected: texts.len(),
                got: parsed.data.len(),
            });
        }
        if parsed.data.iter().all(|d| d.index.is_some()) {
            parsed.data.sort_by_key(|d| d.index);
        }
        parsed
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dim {
                    return Err(EmbedError::DimMismatch {
                        expected: self.dim,
                        got: d.embedding.len(),
                    });
                }
                Ok(EmbeddingVector::normalized(&d.embedding))
            })
            .collect()
    }
}
