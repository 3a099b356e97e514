//! OpenAI-compatible chat-completions client.
//!
//! Posts `{model, messages, n, temperature, max_tokens}` to
//! `<base_url>/v1/chat/completions` with the bearer key from the
//! `HYDRA_API_KEY` environment variable. Transport failures and 5xx
//! responses are retried with exponential backoff and jitter (at most five
//! attempts); any 4xx status is a fatal configuration error.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use serde_json::json;

use crate::error::{HydraError, Result};
use crate::hashing::fnv1a64;
use crate::llm::GenerationRequest;

pub const API_KEY_ENV: &str = "HYDRA_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Endpoint root, e.g. `https://api.openai.com`; the chat-completions
    /// path is appended.
    pub base_url: String,
    pub model: String,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com".to_string(),
            model: "gpt-3.5-turbo".to_string(),
            max_attempts: 5,
            initial_backoff_ms: 500,
            timeout_secs: 60,
        }
    }
}

pub struct HttpBackend {
    config: HttpConfig,
    api_key: String,
    agent: ureq::Agent,
    calls: AtomicU64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: String,
}

impl HttpBackend {
    /// Fails fast (before any network traffic) when the API key is absent.
    pub fn new(config: HttpConfig) -> Result<Self> {
        let api_key = std::env::var(API_KEY_ENV).map_err(|_| {
            HydraError::Config(format!(
                "{API_KEY_ENV} is not set; the HTTP backend needs an API key"
            ))
        })?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpBackend {
            config,
            api_key,
            agent,
            calls: AtomicU64::new(0),
        })
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn fingerprint(&self) -> String {
        format!(
            "{}:{:016x}",
            self.config.model,
            fnv1a64(self.config.base_url.as_bytes())
        )
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<Vec<String>> {
        let mut collected = Vec::with_capacity(req.n_samples);
        // Some servers ignore `n`; keep asking for the remainder.
        while collected.len() < req.n_samples {
            let want = req.n_samples - collected.len();
            let mut batch = self.request_with_retry(req, want)?;
            if batch.is_empty() {
                return Err(HydraError::Backend(
                    "backend returned a response with no choices".into(),
                ));
            }
            batch.truncate(want);
            collected.extend(batch);
        }
        Ok(collected)
    }

    fn request_with_retry(&self, req: &GenerationRequest, n: usize) -> Result<Vec<String>> {
        let url = format!(
            "{}/v1/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "n": n,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });

        let mut last_error = String::new();
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                self.backoff(attempt);
            }
            self.calls.fetch_add(1, Ordering::Relaxed);
            let sent = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(&body);
            match sent {
                Ok(mut response) => {
                    let parsed: ChatResponse = response.body_mut().read_json().map_err(|e| {
                        HydraError::Backend(format!("malformed backend response: {e}"))
                    })?;
                    return Ok(parsed
                        .choices
                        .into_iter()
                        .map(|c| c.message.content)
                        .collect());
                }
                Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) => {
                    return Err(HydraError::Config(format!(
                        "backend rejected the request with HTTP {code}; check key, model, and \
                         endpoint"
                    )));
                }
                Err(e) => {
                    last_error = e.to_string();
                    log::warn!("backend attempt {} failed: {last_error}", attempt + 1);
                }
            }
        }
        Err(HydraError::Backend(format!(
            "giving up after {} attempts; last error: {last_error}",
            self.config.max_attempts
        )))
    }

    fn backoff(&self, attempt: u32) {
        let base = self
            .config
            .initial_backoff_ms
            .saturating_mul(1u64 << (attempt - 1).min(8));
        let jitter = rand::rng().random_range(0..=base / 2 + 1);
        std::thread::sleep(Duration::from_millis(base + jitter));
    }
}
