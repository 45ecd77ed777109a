//! Blocking JSON POST with exponential-backoff retries, shared by the
//! remote embedder and the chat generator.

use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

const EXCERPT_CHARS: usize = 300;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HttpError {
    /// Transport failure, timeout, 429 or 5xx after every retry was spent.
    #[error("request failed after {attempts} attempt(s): {message}")]
    Retryable { attempts: u32, message: String },
    /// Anything retrying cannot fix: other 4xx, bad URL, undecodable body.
    #[error("{message}")]
    Fatal { status: Option<u16>, message: String },
}

#[derive(Debug, Clone)]
pub struct PostOptions {
    pub timeout: Duration,
    pub retries: u32,
    /// Delay before the first retry; doubles after each further failure.
    pub backoff_base: Duration,
    pub bearer: Option<String>,
}

#[derive(Debug, Clone)]
pub struct PostOutcome {
    pub body: Value,
    pub raw_excerpt: String,
    pub attempts: u32,
    pub latency: Duration,
}

pub(crate) fn excerpt(s: &str) -> String {
    match s.char_indices().nth(EXCERPT_CHARS) {
        Some((i, _)) => format!("{}…", &s[..i]),
        None => s.to_string(),
    }
}

enum Failure {
    Retry(String),
    Stop(HttpError),
}

fn attempt(agent: &ureq::Agent, url: &str, body: &Value, opts: &PostOptions) -> Result<(Value, String), Failure> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = &opts.bearer {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = match req.send_json(body) {
        Ok(resp) => resp,
        Err(e @ (ureq::Error::BadUri(_)
        | ureq::Error::Http(_)
        | ureq::Error::InvalidProxyUrl
        | ureq::Error::RequireHttpsOnly(_)
        | ureq::Error::TlsRequired)) => {
            return Err(Failure::Stop(HttpError::Fatal { status: None, message: e.to_string() }))
        }
        Err(e) => return Err(Failure::Retry(e.to_string())),
    };
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| Failure::Retry(format!("reading response body: {e}")))?;
    if status == 429 || status >= 500 {
        return Err(Failure::Retry(format!("HTTP {status}: {}", excerpt(&text))));
    }
    if !(200..300).contains(&status) {
        return Err(Failure::Stop(HttpError::Fatal {
            status: Some(status),
            message: format!("HTTP {status}: {}", excerpt(&text)),
        }));
    }
    let value = serde_json::from_str(&text).map_err(|e| {
        Failure::Stop(HttpError::Fatal {
            status: Some(status),
            message: format!("response is not JSON ({e}): {}", excerpt(&text)),
        })
    })?;
    Ok((value, excerpt(&text)))
}

pub fn post_json(url: &str, body: &Value, opts: &PostOptions) -> Result<PostOutcome, HttpError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let started = Instant::now();
    let mut attempts = 0;
    let mut delay = opts.backoff_base;
    loop {
        attempts += 1;
        match attempt(&agent, url, body, opts) {
            Ok((body, raw_excerpt)) => {
                return Ok(PostOutcome { body, raw_excerpt, attempts, latency: started.elapsed() })
            }
            Err(Failure::Stop(e)) => return Err(e),
            Err(Failure::Retry(message)) => {
                if attempts > opts.retries {
                    return Err(HttpError::Retryable { attempts, message });
                }
                tracing::warn!(url, attempts, %message, "retrying after {:?}", delay);
                thread::sleep(delay);
                delay = delay.saturating_mul(2);
            }
        }
    }
}
