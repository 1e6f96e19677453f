//! Chat-completion backends: a remote HTTP endpoint and a seeded mock.

mod http;
mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parse::RawCompletion;
use crate::prompting::PromptBundle;
use crate::sim::Detection;

pub use http::HttpBackend;
pub use mock::{MockBackend, MockProfile, MOCK_PRESETS};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Transport { status: Option<u16>, message: String },
    #[error("environment variable `{0}` with the API key is not set")]
    MissingApiKey(String),
    #[error("response has no message content: {0}")]
    MalformedResponse(String),
    #[error("invalid backend configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Mock only: a preset name (`default`, `weak`) or a profile file path.
    #[serde(default)]
    pub profile: Option<String>,
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_timeout_ms() -> u64 {
    60_000
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_in_flight() -> usize {
    4
}

impl BackendConfig {
    pub fn mock(model_name: impl Into<String>, profile: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Mock,
            model_name: model_name.into(),
            temperature: DEFAULT_TEMPERATURE,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            backoff_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
            endpoint_url: None,
            api_key_env: None,
            profile: Some(profile.into()),
        }
    }

    pub fn http(model_name: impl Into<String>, endpoint_url: impl Into<String>, api_key_env: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            endpoint_url: Some(endpoint_url.into()),
            api_key_env: Some(api_key_env.into()),
            profile: None,
            ..Self::mock(model_name, "")
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.model_name.trim().is_empty() {
            return Err(BackendError::Config("model_name is empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::Config(format!("temperature {} is outside [0, 2]", self.temperature)));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::Config("timeout_ms must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be positive".into()));
        }
        match self.kind {
            BackendKind::Http if self.endpoint_url.is_none() => {
                Err(BackendError::Config("http backend needs endpoint_url".into()))
            }
            BackendKind::Mock if self.profile.is_none() => Err(BackendError::Config("mock backend needs a profile".into())),
            _ => Ok(()),
        }
    }

    /// Builds the backend. Mock profiles resolve presets first, then
    /// files.
    pub fn build(&self) -> Result<Arc<dyn Backend>, BackendError> {
        self.validate()?;
        Ok(match self.kind {
            BackendKind::Http => Arc::new(HttpBackend::new(self.clone())?),
            BackendKind::Mock => {
                let name = self.profile.as_deref().expect("validated");
                let profile = MockProfile::resolve(name)?;
                Arc::new(MockBackend::new(&self.model_name, profile)?)
            }
        })
    }
}

/// Per-query context. The mock uses the trial seed and what the perception
/// module reports; the HTTP backend ignores both.
#[derive(Debug, Clone, Copy)]
pub struct CompletionContext<'a> {
    pub seed: u64,
    pub perception: &'a [Detection],
}

pub trait Backend: Send + Sync {
    /// Model name recorded in trial cells.
    fn model_name(&self) -> &str;

    fn complete(&self, bundle: &PromptBundle, ctx: &CompletionContext<'_>) -> Result<RawCompletion, BackendError>;
}
