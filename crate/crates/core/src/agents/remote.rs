//! Chat-completion backend over JSON-over-HTTP.
//!
//! The exchange is the common chat shape: request carries model name,
//! message list, temperature (0 by default for reproducibility), and a seed
//! when configured; the reply text is read from
//! `choices[0].message.content`. Auth tokens come from an environment
//! variable named in the config, never from the config file itself.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{prompts, AgentRole, Backend, ProtocolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteBackendConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_timeout_secs() -> u64 {
    60
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

pub struct RemoteBackend {
    config: RemoteBackendConfig,
    client: reqwest::blocking::Client,
}

impl RemoteBackend {
    pub fn new(config: RemoteBackendConfig) -> Result<Self, ProtocolError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| ProtocolError::Backend(e.to_string()))?;
        Ok(Self { config, client })
    }
}

impl Backend for RemoteBackend {
    fn complete(
        &self,
        role: AgentRole,
        _keys: &[String],
        context: &BTreeMap<String, String>,
        _attempt: u32,
    ) -> Result<String, ProtocolError> {
        let prompt = prompts::render(role, context);
        let request = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage {
                role: "user",
                content: &prompt,
            }],
            temperature: self.config.temperature,
            seed: self.config.seed,
        };
        let mut builder = self.client.post(&self.config.url).json(&request);
        if let Some(var) = &self.config.token_env {
            let token = std::env::var(var)
                .map_err(|_| ProtocolError::Backend(format!("auth env var {var} not set")))?;
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .map_err(|e| ProtocolError::Backend(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProtocolError::Backend(format!("HTTP {status}")));
        }
        let body: ChatResponse = response
            .json()
            .map_err(|e| ProtocolError::Backend(e.to_string()))?;
        body.choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProtocolError::Backend("empty choices in chat response".into()))
    }
}
