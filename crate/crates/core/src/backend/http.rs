//! OpenAI-style chat-completions client.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{Backend, BackendConfig, BackendError, CompletionContext};
use crate::parse::RawCompletion;
use crate::prompting::PromptBundle;

/// Counting gate limiting concurrent requests.
struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(limit: usize) -> Self {
        Self { in_flight: Mutex::new(0), freed: Condvar::new(), limit }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

pub struct HttpBackend {
    cfg: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: Gate,
    id: String,
}

enum Attempt {
    Done(String),
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable now, so a
    /// missing key fails before any trial runs.
    pub fn new(cfg: BackendConfig) -> Result<Self, BackendError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingApiKey(var.clone()))?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        let id = format!("http:{}", cfg.model_name);
        let gate = Gate::new(cfg.max_in_flight);
        Ok(Self { cfg, client, api_key, gate, id })
    }

    fn body(&self, bundle: &PromptBundle) -> Value {
        let messages: Vec<Value> =
            bundle.messages.iter().map(|m| json!({"role": m.role.to_string(), "content": m.content})).collect();
        json!({"model": self.cfg.model_name, "messages": messages, "temperature": self.cfg.temperature})
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let url = self.cfg.endpoint_url.as_deref().expect("validated");
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(BackendError::Transport { status: None, message: e.to_string() }),
        };
        let status = resp.status();
        let text = resp.text().unwrap_or_default();
        if status.as_u16() == 429 || status.is_server_error() {
            return Attempt::Retry(BackendError::Transport { status: Some(status.as_u16()), message: text });
        }
        if !status.is_success() {
            return Attempt::Fatal(BackendError::Transport { status: Some(status.as_u16()), message: text });
        }
        match extract_content(&text) {
            Ok(c) => Attempt::Done(c),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

/// `choices[0].message.content` of a chat-completions response.
pub fn extract_content(body: &str) -> Result<String, BackendError> {
    let v: Value = serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::MalformedResponse("missing choices[0].message.content".into()))
}

impl Backend for HttpBackend {
    fn model_name(&self) -> &str {
        &self.cfg.model_name
    }

    fn complete(&self, bundle: &PromptBundle, _ctx: &CompletionContext<'_>) -> Result<RawCompletion, BackendError> {
        let body = self.body(bundle);
        let _permit = self.gate.acquire();
        let start = Instant::now();
        let mut delay = self.cfg.backoff_ms;
        let mut tries = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(text) => {
                    let ms = start.elapsed().as_millis() as u64;
                    return Ok(RawCompletion::new(text, self.id.clone(), ms));
                }
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) if tries >= self.cfg.max_retries => return Err(e),
                Attempt::Retry(_) => {
                    std::thread::sleep(Duration::from_millis(delay));
                    delay = delay.saturating_mul(2);
                    tries += 1;
                }
            }
        }
    }
}
