use std::time::Duration;

use async_trait::async_trait;
use serde_json::{json, Value};

use super::{AttemptError, ChatBackend, EndpointConfig, GatewayError, Message};

/// OpenAI-compatible `POST {base_url}/chat/completions` backend.
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("url", &self.url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpBackend {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: &EndpointConfig) -> Result<Self, GatewayError> {
        let api_key = match &config.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Some(key),
                _ => {
                    return Err(GatewayError::Auth(format!(
                        "environment variable {var} is not set"
                    )))
                }
            },
            None => None,
        };
        let url = reqwest::Url::parse(&config.base_url)
            .map_err(|e| GatewayError::InvalidConfig(format!("base_url: {e}")))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        Ok(HttpBackend {
            client,
            url: format!("{}/chat/completions", url.as_str().trim_end_matches('/')),
            api_key,
        })
    }
}

/// Text of the first choice in a chat-completions response body.
pub(crate) fn extract_text(body: &Value) -> Result<String, AttemptError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| AttemptError::Malformed("missing choices[0].message.content".into()))
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn send(
        &self,
        config: &EndpointConfig,
        messages: &[Message],
    ) -> Result<String, AttemptError> {
        let body = json!({
            "model": config.model_name,
            "messages": messages,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().await.map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Connection(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        match status {
            401 | 403 => return Err(AttemptError::Auth(format!("status {status}"))),
            429 => return Err(AttemptError::RateLimited),
            500..=599 => return Err(AttemptError::Server(status)),
            200..=299 => {}
            _ => {
                let body = resp.text().await.unwrap_or_default();
                return Err(AttemptError::Rejected { status, body });
            }
        }
        let value: Value = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                AttemptError::Timeout
            } else {
                AttemptError::Malformed(e.to_string())
            }
        })?;
        extract_text(&value)
    }
}
