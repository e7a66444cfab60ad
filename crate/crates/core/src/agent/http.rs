use std::time::Duration;

use super::{AgentError, ChatRequest, ProviderConfig, Transport};

/// Blocking HTTPS transport for chat-completion endpoints.
pub struct HttpTransport {
    endpoint: String,
    key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport").field("endpoint", &self.endpoint).field("key", &"<redacted>").finish()
    }
}

impl HttpTransport {
    /// Reads the key from the configured environment variable.
    pub fn from_config(config: &ProviderConfig) -> Result<HttpTransport, AgentError> {
        if !config.online {
            return Err(AgentError::Offline);
        }
        let key = std::env::var(&config.api_key_env_var)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| AgentError::MissingKey(config.api_key_env_var.clone()))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(HttpTransport {
            endpoint: config.endpoint_url.clone(),
            key,
            agent,
        })
    }
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(request)
            // The error text never contains request headers.
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let body: serde_json::Value = resp.body_mut().read_json().map_err(|e| AgentError::Response(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| AgentError::Response("missing choices[0].message.content".into()))
    }
}
