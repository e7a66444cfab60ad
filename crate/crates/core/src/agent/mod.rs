//! Optional skill-synthesis client for a chat-completion endpoint.
//!
//! The agent only writes declarative skill JSON and prose annotations. It is
//! never called from the search or the ranking, and it is offline unless a
//! [`ProviderConfig`] explicitly enables it. The API key is read from the
//! environment variable named in the config and is never stored elsewhere.

#[cfg(feature = "http")]
mod http;
mod mock;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pareto::ParetoPoint;
use crate::skills::{bundled_skill_json, Skill, SCHEMA_VERSION};

#[cfg(feature = "http")]
pub use http::HttpTransport;
pub use mock::MockTransport;

pub const SKILL_PROMPT: &str = include_str!("../../assets/prompts/skill_synthesis.v1.txt");
pub const RETRY_PROMPT: &str = include_str!("../../assets/prompts/skill_retry.v1.txt");
pub const ANNOTATE_PROMPT: &str = include_str!("../../assets/prompts/annotate.v1.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("agent is offline; use a bundled skill (`isotropic` or `anisotropic`) or enable online mode")]
    Offline,
    #[error("empty domain descriptor")]
    EmptyDescriptor,
    #[error("environment variable `{0}` holding the API key is not set")]
    MissingKey(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Response(String),
    #[error("no valid skill after {attempts} attempts; last errors: {}", errors.join(" | "))]
    RetriesExhausted { attempts: usize, errors: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProviderConfig {
    pub online: bool,
    pub endpoint_url: String,
    /// Name of the environment variable that holds the key.
    pub api_key_env_var: String,
    pub model_name: String,
    pub timeout_secs: u64,
    pub max_retries: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            online: false,
            endpoint_url: String::new(),
            api_key_env_var: "HYPERLAW_AGENT_API_KEY".into(),
            model_name: String::new(),
            timeout_secs: 60,
            max_retries: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> ChatMessage {
        ChatMessage {
            role: role.into(),
            content: content.into(),
        }
    }
}

/// Body of a chat-completion request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
}

/// One blocking request/response exchange; returns the reply text.
pub trait Transport {
    fn complete(&self, request: &ChatRequest) -> Result<String, AgentError>;
}

/// Fills `{name}` placeholders.
fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

/// The JSON object in a reply, without surrounding prose or code fences.
fn extract_json(reply: &str) -> &str {
    match (reply.find('{'), reply.rfind('}')) {
        (Some(a), Some(b)) if b > a => &reply[a..=b],
        _ => reply.trim(),
    }
}

pub struct Agent<T: Transport> {
    config: ProviderConfig,
    transport: T,
}

impl<T: Transport> Agent<T> {
    pub fn new(config: ProviderConfig, transport: T) -> Agent<T> {
        Agent { config, transport }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    /// Asks for a skill file for `descriptor`, retrying with the validator's
    /// message up to `max_retries` times.
    pub fn synthesize_skill(&self, descriptor: &str) -> Result<Skill, AgentError> {
        if !self.config.online {
            return Err(AgentError::Offline);
        }
        let descriptor = descriptor.trim();
        if descriptor.is_empty() {
            return Err(AgentError::EmptyDescriptor);
        }
        let example = bundled_skill_json("isotropic").expect("bundled skill");
        let version = SCHEMA_VERSION.to_string();
        let prompt = render(SKILL_PROMPT, &[("descriptor", descriptor), ("example", example), ("schema_version", &version)]);
        let mut request = ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage::new("user", prompt)],
        };
        let mut errors = Vec::new();
        let attempts = self.config.max_retries + 1;
        for attempt in 0..attempts {
            let reply = self.transport.complete(&request)?;
            match Skill::from_json(extract_json(&reply)) {
                Ok(skill) => return Ok(skill),
                Err(e) => {
                    log::warn!("skill attempt {} rejected: {e}", attempt + 1);
                    let msg = e.to_string();
                    request.messages.push(ChatMessage::new("assistant", reply));
                    request.messages.push(ChatMessage::new("user", render(RETRY_PROMPT, &[("error", &msg)])));
                    errors.push(msg);
                }
            }
        }
        Err(AgentError::RetriesExhausted { attempts, errors })
    }

    /// Prose commentary on a ranked front. Never reorders anything; failures
    /// yield an empty annotation and a warning.
    pub fn annotate_candidates(&self, front: &[ParetoPoint]) -> String {
        if front.is_empty() {
            return String::new();
        }
        if !self.config.online {
            log::warn!("agent offline; no annotation");
            return String::new();
        }
        let mut rows = String::new();
        for (i, p) in front.iter().enumerate() {
            let holdout = p.holdout_mse.map_or("n/a".to_string(), |v| format!("{v:.4e}"));
            let _ = writeln!(
                rows,
                "{}. {} | {:.4e} | {} | {} | {}",
                i + 1,
                p.complexity,
                p.train_mse,
                holdout,
                p.audit.convexity.as_str(),
                p.expr
            );
        }
        let request = ChatRequest {
            model: self.config.model_name.clone(),
            messages: vec![ChatMessage::new("user", render(ANNOTATE_PROMPT, &[("candidates", &rows)]))],
        };
        match self.transport.complete(&request) {
            Ok(text) => text,
            Err(e) => {
                log::warn!("annotation failed: {e}");
                String::new()
            }
        }
    }
}
