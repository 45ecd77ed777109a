//! Message generation from augmented inputs.
//!
//! [`ChatGenerator`] sends rendered prompts to an OpenAI-compatible chat
//! completions endpoint. [`MockEchoGenerator`] returns the exemplar's own
//! message; it is a deterministic test double and doubles as a
//! retrieval-only baseline.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::augment::AugmentedInput;
use crate::corpus::DiffMessagePair;
use crate::http::{post_json, HttpError, PostOptions};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("chat generation needs a rendered prompt, not a concatenated PLM input")]
    NotAPrompt,
    #[error("no exemplar to echo")]
    MissingExemplar,
    #[error("generation failed after {attempts} attempt(s): {message}")]
    Retryable { attempts: u32, message: String },
    #[error("endpoint rejected the request: {0}")]
    Fatal(String),
}

impl GenerateError {
    /// Configuration problems that will fail every item the same way.
    pub fn is_fatal(&self) -> bool {
        matches!(self, Self::Fatal(_) | Self::NotAPrompt)
    }
}

impl From<HttpError> for GenerateError {
    fn from(e: HttpError) -> Self {
        match e {
            HttpError::Retryable { attempts, message } => Self::Retryable { attempts, message },
            HttpError::Fatal { message, .. } => Self::Fatal(message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub endpoint_url: String,
    pub chat_path: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
    pub retries: u32,
    pub api_key_env: String,
    pub backoff_base_ms: u64,
    pub first_line_only: bool,
    /// Concurrent requests during batch runs.
    pub concurrency: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://localhost:8080".into(),
            chat_path: "/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            temperature: 0.0,
            max_output_tokens: 128,
            timeout_secs: 60,
            retries: 2,
            api_key_env: crate::API_KEY_ENV.into(),
            backoff_base_ms: 1000,
            first_line_only: true,
            concurrency: 4,
        }
    }
}

impl GeneratorConfig {
    pub fn url(&self) -> String {
        format!("{}{}", self.endpoint_url.trim_end_matches('/'), self.chat_path)
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.timeout_secs == 0 {
            return Err(GenerateError::Fatal("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub message_text: String,
    pub raw_response_excerpt: String,
    pub latency_ms: u64,
    pub attempts: u32,
}

pub trait Generator: Send + Sync {
    fn generate(&self, input: &AugmentedInput, exemplar: Option<&DiffMessagePair>) -> Result<GenerationResult, GenerateError>;

    /// Upper bound on simultaneous `generate` calls in batch runs.
    fn concurrency(&self) -> usize {
        1
    }

    /// Settings recorded in run manifests. Never includes secrets.
    fn describe(&self) -> Value;
}

/// Trims, unwraps code fences and one pair of surrounding quotes, and with
/// `first_line_only` keeps the first non-empty line. Repeats until nothing
/// changes, which makes the function idempotent.
pub fn postprocess(raw: &str, first_line_only: bool) -> String {
    let mut current = raw.to_string();
    loop {
        let next = postprocess_once(&current, first_line_only);
        if next == current {
            return next;
        }
        current = next;
    }
}

fn postprocess_once(raw: &str, first_line_only: bool) -> String {
    let mut s = raw.trim();
    if let Some(rest) = s.strip_prefix("```") {
        // Opening fence may carry a language tag.
        s = match rest.split_once('\n') {
            Some((_, body)) => body,
            None => rest,
        };
        s = s.trim_end().strip_suffix("```").unwrap_or(s).trim();
    }
    for q in ['"', '\'', '`'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            s = s[1..s.len() - 1].trim();
            break;
        }
    }
    if first_line_only {
        s = s.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    }
    s.to_string()
}

fn chat_body(messages: &[crate::augment::ChatMessage], cfg: &GeneratorConfig) -> Value {
    json!({
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
        "messages": messages,
    })
}

pub fn generate_chat(input: &AugmentedInput, cfg: &GeneratorConfig, api_key: Option<&str>) -> Result<GenerationResult, GenerateError> {
    let messages = input.messages().ok_or(GenerateError::NotAPrompt)?;
    cfg.validate()?;
    let opts = PostOptions {
        timeout: Duration::from_secs(cfg.timeout_secs),
        retries: cfg.retries,
        backoff_base: Duration::from_millis(cfg.backoff_base_ms),
        bearer: api_key.map(str::to_string),
    };
    let outcome = post_json(&cfg.url(), &chat_body(messages, cfg), &opts)?;
    let content = outcome
        .body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GenerateError::Fatal(format!("no choices[0].message.content in {}", outcome.raw_excerpt)))?;
    Ok(GenerationResult {
        message_text: postprocess(content, cfg.first_line_only),
        raw_response_excerpt: outcome.raw_excerpt,
        latency_ms: outcome.latency.as_millis() as u64,
        attempts: outcome.attempts,
    })
}

pub struct ChatGenerator {
    cfg: GeneratorConfig,
    api_key: Option<String>,
}

impl ChatGenerator {
    pub fn new(cfg: GeneratorConfig, api_key: Option<String>) -> Self {
        Self { cfg, api_key }
    }

    /// Reads the bearer token from `cfg.api_key_env` when it is set.
    pub fn from_env(cfg: GeneratorConfig) -> Self {
        let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
        Self::new(cfg, key)
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }
}

impl Generator for ChatGenerator {
    fn generate(&self, input: &AugmentedInput, _exemplar: Option<&DiffMessagePair>) -> Result<GenerationResult, GenerateError> {
        generate_chat(input, &self.cfg, self.api_key.as_deref())
    }

    fn concurrency(&self) -> usize {
        self.cfg.concurrency.max(1)
    }

    fn describe(&self) -> Value {
        let mut v = serde_json::to_value(&self.cfg).expect("config serializes");
        v["kind"] = json!("chat");
        v["api_key"] = json!(if self.api_key.is_some() { "<redacted>" } else { "<none>" });
        v
    }
}

pub fn mock_echo_generator(_input: &AugmentedInput, exemplar: &DiffMessagePair) -> GenerationResult {
    GenerationResult {
        message_text: exemplar.message_text.clone(),
        raw_response_excerpt: String::new(),
        latency_ms: 0,
        attempts: 1,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockEchoGenerator;

impl Generator for MockEchoGenerator {
    fn generate(&self, input: &AugmentedInput, exemplar: Option<&DiffMessagePair>) -> Result<GenerationResult, GenerateError> {
        exemplar.map(|e| mock_echo_generator(input, e)).ok_or(GenerateError::MissingExemplar)
    }

    fn describe(&self) -> Value {
        json!({ "kind": "mock-echo" })
    }
}
