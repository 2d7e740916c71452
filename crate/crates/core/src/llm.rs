//! Minimal blocking client for an OpenAI-compatible chat-completions
//! endpoint, used for module descriptions and functional classification.
//!
//! Requests are serialized through one lock, spaced by `min_interval_ms`,
//! and retried with exponential backoff.

use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout_secs: u64,
    pub min_interval_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "o3-mini".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            timeout_secs: 120,
            min_interval_ms: 200,
            retries: 2,
            backoff_ms: 500,
        }
    }
}

impl EndpointConfig {
    pub fn from_file(path: &Path) -> Result<Self, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::Config(e.to_string()))?;
        toml::from_str(&text).map_err(|e| ClientError::Config(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("endpoint config: {0}")]
    Config(String),
    #[error("client unavailable: {0}")]
    Unavailable(String),
    #[error("unexpected reply: {0}")]
    BadReply(String),
}

#[derive(Debug)]
pub struct ChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        ChatClient {
            config,
            agent,
            last_request: Mutex::new(None),
        }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    /// Sends one user message and returns the assistant's text.
    pub fn complete(&self, prompt: &str) -> Result<String, ClientError> {
        let mut last = self.last_request.lock().unwrap_or_else(|e| e.into_inner());
        let mut attempt = 0;
        loop {
            if let Some(prev) = *last {
                let gap = Duration::from_millis(self.config.min_interval_ms);
                let elapsed = prev.elapsed();
                if elapsed < gap {
                    thread::sleep(gap - elapsed);
                }
            }
            *last = Some(Instant::now());
            match self.send_once(prompt) {
                Ok(text) => return Ok(text),
                Err(err) if attempt < self.config.retries => {
                    log::warn!("model request failed (attempt {}): {err}", attempt + 1);
                    thread::sleep(Duration::from_millis(self.config.backoff_ms << attempt));
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn send_once(&self, prompt: &str) -> Result<String, ClientError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self
            .agent
            .post(&self.config.url)
            .header("Content-Type", "application/json");
        if let Some(key) = self
            .config
            .api_key_env
            .as_deref()
            .and_then(|v| std::env::var(v).ok())
        {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send(body.to_string())
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Unavailable(e.to_string()))?;
        if status != 200 {
            return Err(ClientError::Unavailable(format!("HTTP {status}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ClientError::BadReply(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::BadReply("missing choices[0].message.content".into()))
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config(url: &str) -> EndpointConfig {
        EndpointConfig {
            url: url.into(),
            api_key_env: None,
            timeout_secs: 5,
            min_interval_ms: 0,
            backoff_ms: 1,
            ..EndpointConfig::default()
        }
    }

    #[test]
    fn returns_assistant_text() {
        let server = testing::serve(vec![(200, "Hello.".into())]);
        let client = ChatClient::new(fast_config(&server.url));
        assert_eq!(client.complete("hi").unwrap(), "Hello.");
        let body = &server.requests.lock().unwrap()[0];
        assert!(body.contains("\"content\":\"hi\""));
    }

    #[test]
    fn retries_after_server_error() {
        let server = testing::serve(vec![
            (500, "".into()),
            (500, "".into()),
            (200, "Third.".into()),
        ]);
        let client = ChatClient::new(fast_config(&server.url));
        assert_eq!(client.complete("x").unwrap(), "Third.");
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let client = ChatClient::new(EndpointConfig {
            retries: 0,
            ..fast_config("http://127.0.0.1:9/v1/chat/completions")
        });
        assert!(matches!(
            client.complete("x"),
            Err(ClientError::Unavailable(_))
        ));
    }
}
