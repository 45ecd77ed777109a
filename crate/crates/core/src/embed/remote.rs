use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector, EMBEDDING_DIM};
use crate::http::{post_json, PostOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingEndpointConfig {
    pub base_url: String,
    pub path: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub api_key_env: String,
}

impl Default for EmbeddingEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8080".into(),
            path: "/v1/embeddings".into(),
            model: "codet5p-110m-embedding".into(),
            timeout_secs: 60,
            retries: 2,
            backoff_base_ms: 1000,
            api_key_env: crate::API_KEY_ENV.into(),
        }
    }
}

impl EmbeddingEndpointConfig {
    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }

    fn post_options(&self, api_key: Option<&str>) -> PostOptions {
        PostOptions {
            timeout: Duration::from_secs(self.timeout_secs.max(1)),
            retries: self.retries,
            backoff_base: Duration::from_millis(self.backoff_base_ms),
            bearer: api_key.map(str::to_string),
        }
    }
}

/// Fetches one embedding. Vectors that are not 256-dimensional are
/// truncated or zero-padded, then re-normalized; the second element of the
/// result describes that adaptation when it happened.
pub fn embed_remote(
    text: &str,
    cfg: &EmbeddingEndpointConfig,
    api_key: Option<&str>,
) -> Result<(EmbeddingVector, Option<String>), EmbedError> {
    let body = json!({ "model": cfg.model, "input": [text] });
    let outcome = post_json(&cfg.url(), &body, &cfg.post_options(api_key))?;
    let mut raw = parse_embedding(&outcome.body)?;
    let warning = (raw.len() != EMBEDDING_DIM).then(|| {
        format!("endpoint returned {} dimensions, adapted to {EMBEDDING_DIM}", raw.len())
    });
    raw.resize(EMBEDDING_DIM, 0.0);
    Ok((EmbeddingVector::normalized(raw, format!("remote:{}", cfg.model)), warning))
}

fn parse_embedding(body: &Value) -> Result<Vec<f64>, EmbedError> {
    let values = body
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| EmbedError::BadResponse("missing data[0].embedding".into()))?;
    values
        .iter()
        .map(|v| v.as_f64().ok_or_else(|| EmbedError::BadResponse(format!("non-numeric component {v}"))))
        .collect()
}

pub struct RemoteEmbedder {
    cfg: EmbeddingEndpointConfig,
    api_key: Option<String>,
    tag: String,
    warnings: Mutex<Vec<String>>,
}

impl RemoteEmbedder {
    pub fn new(cfg: EmbeddingEndpointConfig, api_key: Option<String>) -> Self {
        let tag = format!("remote:{}", cfg.model);
        Self { cfg, api_key, tag, warnings: Mutex::new(Vec::new()) }
    }

    /// Reads the key from `cfg.api_key_env`; a missing key is an error.
    pub fn from_env(cfg: EmbeddingEndpointConfig) -> Result<Self, EmbedError> {
        match std::env::var(&cfg.api_key_env) {
            Ok(key) if !key.is_empty() => Ok(Self::new(cfg, Some(key))),
            _ => Err(EmbedError::MissingApiKey(cfg.api_key_env.clone())),
        }
    }

    /// Dimension-adaptation warnings recorded so far.
    pub fn warnings(&self) -> Vec<String> {
        self.warnings.lock().expect("poisoned").clone()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn tag(&self) -> &str {
        &self.tag
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let (vector, warning) = embed_remote(text, &self.cfg, self.api_key.as_deref())?;
        if let Some(w) = warning {
            tracing::warn!("{w}");
            self.warnings.lock().expect("poisoned").push(w);
        }
        Ok(vector)
    }
}
