use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};

use super::provider::{BackendError, CompletionBackend, ProviderConfig};
use crate::prompt::{PartKind, PromptBundle};

pub const TOKEN_ENV: &str = "SOCIALIZE_PROVIDER_TOKEN";

/// Chat-completion style HTTP endpoint (`POST {base_url}/chat/completions`).
///
/// The overall section goes out as the system message and the rest of the
/// rendered prompt as the user message. The reply text is read from
/// `choices[0].message.content`.
#[derive(Debug)]
pub struct HttpBackend {
    client: Client,
    url: String,
    model: String,
    token: Option<String>,
}

impl HttpBackend {
    /// Reads the bearer token from `SOCIALIZE_PROVIDER_TOKEN` when set.
    pub fn new(config: &ProviderConfig) -> Result<Self, BackendError> {
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Self::with_token(config, token)
    }

    pub fn with_token(config: &ProviderConfig, token: Option<String>) -> Result<Self, BackendError> {
        let client = Client::builder()
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            token,
        })
    }

    fn request_body(&self, bundle: &PromptBundle) -> Value {
        let rendered = bundle.render();
        let system = bundle.part(PartKind::Overall);
        json!({
            "model": self.model,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": rendered },
            ],
        })
    }
}

impl CompletionBackend for HttpBackend {
    fn send(&self, bundle: &PromptBundle, timeout: Duration) -> Result<String, BackendError> {
        let mut req = self
            .client
            .post(&self.url)
            .timeout(timeout)
            .json(&self.request_body(bundle));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        let body = resp.text().map_err(classify)?;
        if !status.is_success() {
            let message: String = body.chars().take(200).collect();
            return Err(BackendError::Status {
                status: status.as_u16(),
                message,
            });
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| BackendError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
    }
}
