//! Model provider layer: chat (text and vision) and text embeddings, each
//! served either by a deterministic stub or an OpenAI-compatible endpoint.

pub mod embed;
#[cfg(feature = "http")]
pub mod http;
pub mod latency;
pub mod prompts;
pub mod stub;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use embed::{cosine, HashEmbedder};
pub use latency::{LatencyRecorder, LatencyReport, LatencyStats};
pub use stub::{Fixture, StubChat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Parser,
    Supervisor,
    Relation,
    Verifier,
    Summarizer,
    Embedder,
}

impl Role {
    pub const ALL: [Role; 6] =
        [Role::Parser, Role::Supervisor, Role::Relation, Role::Verifier, Role::Summarizer, Role::Embedder];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Parser => "parser",
            Role::Supervisor => "supervisor",
            Role::Relation => "relation",
            Role::Verifier => "verifier",
            Role::Summarizer => "summarizer",
            Role::Embedder => "embedder",
        }
    }

    /// Prefix of this role's environment variables, e.g. `IKB_PARSER_`.
    pub fn env_prefix(self) -> String {
        format!("IKB_{}_", self.as_str().to_ascii_uppercase())
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    #[default]
    Stub,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_base_s: f64,
    pub max_concurrency: usize,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Stub,
            endpoint: None,
            model: None,
            token_env: None,
            timeout_s: 30.0,
            max_retries: 3,
            backoff_base_s: 1.0,
            max_concurrency: 4,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self, role: Role) -> Result<(), ProviderError> {
        if !(self.timeout_s > 0.0) {
            return Err(ProviderError::InvalidConfig(format!("{role}: timeout must be positive")));
        }
        if self.mode == ProviderMode::Http && (self.endpoint.is_none() || self.model.is_none()) {
            return Err(ProviderError::InvalidConfig(format!("{role}: http mode needs endpoint and model")));
        }
        if self.max_concurrency == 0 {
            return Err(ProviderError::InvalidConfig(format!("{role}: max_concurrency must be at least 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("{role} provider unavailable after {attempts} attempt(s): {reason}")]
    Unavailable { role: Role, attempts: u32, reason: String },
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
    #[error("embedding dimension {got} does not match map dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot embed empty text")]
    EmptyText,
}

impl ProviderError {
    pub fn unavailable(role: Role, reason: impl Into<String>) -> Self {
        ProviderError::Unavailable { role, attempts: 0, reason: reason.into() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Part {
    Text(String),
    /// PNG bytes; sent as a base64 data URL.
    Image(Arc<Vec<u8>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatRequest {
    pub role: Role,
    pub system: String,
    pub parts: Vec<Part>,
}

impl ChatRequest {
    pub fn text(role: Role, system: &str, user: impl Into<String>) -> Self {
        ChatRequest { role, system: system.to_string(), parts: vec![Part::Text(user.into())] }
    }

    pub fn with_image(mut self, png: Arc<Vec<u8>>) -> Self {
        self.parts.push(Part::Image(png));
        self
    }

    /// Concatenated text of the prompt (system then user text parts).
    pub fn prompt_text(&self) -> String {
        let mut s = self.system.clone();
        for p in &self.parts {
            if let Part::Text(t) = p {
                s.push('\n');
                s.push_str(t);
            }
        }
        s
    }

    /// Hex sha256 of [`prompt_text`](Self::prompt_text). Images are not
    /// hashed so fixtures stay stable when rendering details change.
    pub fn prompt_hash(&self) -> String {
        Sha256::digest(self.prompt_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChatExchange {
    pub system: String,
    pub parts: Vec<Part>,
    pub reply: String,
    pub latency_ms: f64,
    pub attempts: u32,
}

pub trait ChatProvider: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<ChatExchange, ProviderError>;

    /// True when this provider never touches the network.
    fn is_stub(&self) -> bool;
}

pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f32>, ProviderError>;
}

/// Checks an embedder against a map's fixed dimension.
pub fn check_embedder_dim(e: &dyn TextEmbedder, map_dim: usize) -> Result<(), ProviderError> {
    if e.dim() != map_dim {
        return Err(ProviderError::DimensionMismatch { expected: map_dim, got: e.dim() });
    }
    Ok(())
}

/// One chat provider per role plus the embedder and a shared latency log.
#[derive(Clone)]
pub struct Providers {
    pub parser: Arc<dyn ChatProvider>,
    pub supervisor: Arc<dyn ChatProvider>,
    pub relation: Arc<dyn ChatProvider>,
    pub verifier: Arc<dyn ChatProvider>,
    pub summarizer: Arc<dyn ChatProvider>,
    pub embedder: Arc<dyn TextEmbedder>,
    pub latency: Arc<LatencyRecorder>,
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers").field("embedding_dim", &self.embedder.dim()).finish_non_exhaustive()
    }
}

impl Providers {
    /// All roles stubbed, sharing one fixture table.
    pub fn stub(embedding_dim: usize, chat: StubChat) -> Self {
        let chat: Arc<dyn ChatProvider> = Arc::new(chat);
        Providers {
            parser: chat.clone(),
            supervisor: chat.clone(),
            relation: chat.clone(),
            verifier: chat.clone(),
            summarizer: chat,
            embedder: Arc::new(HashEmbedder::new(embedding_dim)),
            latency: Arc::new(LatencyRecorder::new()),
        }
    }

    pub fn chat_for(&self, role: Role) -> &Arc<dyn ChatProvider> {
        match role {
            Role::Parser => &self.parser,
            Role::Supervisor => &self.supervisor,
            Role::Relation => &self.relation,
            Role::Verifier => &self.verifier,
            Role::Summarizer | Role::Embedder => &self.summarizer,
        }
    }

    pub fn set_chat(&mut self, role: Role, p: Arc<dyn ChatProvider>) {
        match role {
            Role::Parser => self.parser = p,
            Role::Supervisor => self.supervisor = p,
            Role::Relation => self.relation = p,
            Role::Verifier => self.verifier = p,
            Role::Summarizer => self.summarizer = p,
            Role::Embedder => {}
        }
    }

    /// Runs a chat call and records its latency under the request's role.
    pub fn chat(&self, req: &ChatRequest) -> Result<ChatExchange, ProviderError> {
        let out = self.chat_for(req.role).chat(req);
        if let Ok(x) = &out {
            self.latency.record(req.role.as_str(), x.latency_ms);
        }
        out
    }

    pub fn all_stub(&self) -> bool {
        [&self.parser, &self.supervisor, &self.relation, &self.verifier, &self.summarizer].iter().all(|p| p.is_stub())
    }
}

/// Extracts the first JSON object from a model reply, tolerating code fences
/// and surrounding prose.
pub fn extract_json(reply: &str) -> Option<serde_json::Value> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    serde_json::from_str(&reply[start..=end]).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_prefixes() {
        assert_eq!(Role::Verifier.env_prefix(), "IKB_VERIFIER_");
    }

    #[test]
    fn http_mode_needs_endpoint() {
        let cfg = ProviderConfig { mode: ProviderMode::Http, ..Default::default() };
        assert!(cfg.validate(Role::Parser).is_err());
        let bad = ProviderConfig { timeout_s: 0.0, ..Default::default() };
        assert!(bad.validate(Role::Parser).is_err());
    }

    #[test]
    fn json_inside_fences() {
        let v = extract_json("```json\n{\"trigger\": true, \"reason\": \"x\"}\n```").unwrap();
        assert_eq!(v["trigger"], true);
        assert!(extract_json("no json here").is_none());
    }

    #[test]
    fn prompt_hash_ignores_images() {
        let a = ChatRequest::text(Role::Verifier, "sys", "find a chair");
        let b = a.clone().with_image(Arc::new(vec![1, 2, 3]));
        assert_eq!(a.prompt_hash(), b.prompt_hash());
    }
}
