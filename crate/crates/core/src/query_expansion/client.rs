use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Environment variable holding the bearer token for the completion API.
pub const API_KEY_ENV: &str = "Q2D_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model_name: "text-davinci-003".into(),
            temperature: 1.0,
            max_tokens: 128,
            seed: 0,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            ));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be >= 1".into());
        }
        if self.model_name.is_empty() {
            return Err("model name must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub system_message: Option<&'a str>,
    pub params: &'a GenerationParams,
}

impl CompletionRequest<'_> {
    /// Completion-style body, or chat-style when a system message is set.
    pub fn to_json(&self) -> Value {
        match self.system_message {
            None => json!({
                "model": self.params.model_name,
                "prompt": self.prompt,
                "temperature": self.params.temperature,
                "max_tokens": self.params.max_tokens,
            }),
            Some(system) => json!({
                "model": self.params.model_name,
                "messages": [
                    {"role": "system", "content": system},
                    {"role": "user", "content": self.prompt},
                ],
                "temperature": self.params.temperature,
                "max_tokens": self.params.max_tokens,
            }),
        }
    }
}

/// Failure of a single endpoint call.
#[derive(Debug, Clone, PartialEq)]
pub struct CallError {
    pub message: String,
    pub retryable: bool,
}

impl CallError {
    pub fn retryable(message: impl Into<String>) -> Self {
        CallError {
            message: message.into(),
            retryable: true,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        CallError {
            message: message.into(),
            retryable: false,
        }
    }
}

/// Anything that turns a prompt into completion text. One call is one
/// attempt; retries are handled by the caller.
pub trait CompletionEndpoint: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, CallError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
            multiplier: 2.0,
            max_backoff: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (attempts count from 1).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = self.multiplier.powi(attempt.saturating_sub(1) as i32);
        self.initial_backoff.mul_f64(factor).min(self.max_backoff)
    }

    /// Runs `call` until it succeeds, fails fatally or attempts run out.
    /// On failure returns the last error and the number of attempts made.
    pub fn run<T>(
        &self,
        mut call: impl FnMut() -> Result<T, CallError>,
    ) -> Result<T, (CallError, u32)> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if !e.retryable || attempt >= self.max_attempts.max(1) => {
                    return Err((e, attempt))
                }
                Err(e) => {
                    log::warn!("completion attempt {attempt} failed: {}", e.message);
                    std::thread::sleep(self.backoff(attempt));
                }
            }
        }
    }
}

/// HTTP JSON client for OpenAI-compatible completion and chat endpoints.
pub struct HttpCompletionClient {
    url: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpCompletionClient {
    pub fn new(
        url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, CallError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| CallError::fatal(format!("http client: {e}")))?;
        Ok(HttpCompletionClient {
            url: url.into(),
            api_key,
            http,
        })
    }

    /// Reads the key from [`API_KEY_ENV`].
    pub fn from_env(url: impl Into<String>, timeout: Duration) -> Result<Self, CallError> {
        Self::new(url, std::env::var(API_KEY_ENV).ok(), timeout)
    }
}

/// Extracts the completion text from a completion or chat response.
pub fn completion_text(body: &Value) -> Option<&str> {
    let choice = body.get("choices")?.get(0)?;
    choice
        .get("text")
        .or_else(|| choice.get("message")?.get("content"))
        .and_then(Value::as_str)
}

impl CompletionEndpoint for HttpCompletionClient {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, CallError> {
        let mut req = self.http.post(&self.url).json(&request.to_json());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| CallError::retryable(format!("transport: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| CallError::retryable(format!("reading body: {e}")))?;
        if !status.is_success() {
            let msg = format!(
                "HTTP {status}: {}",
                text.chars().take(200).collect::<String>()
            );
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                CallError::retryable(msg)
            } else {
                CallError::fatal(msg)
            });
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| CallError::fatal(format!("response is not JSON: {e}")))?;
        completion_text(&body)
            .map(str::to_string)
            .ok_or_else(|| CallError::fatal("response has no completion text"))
    }
}
