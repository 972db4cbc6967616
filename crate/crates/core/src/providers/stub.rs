use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChatExchange, ChatProvider, ChatRequest, ProviderError, Role};

/// One canned reply. Either the raw prompt or its sha256 identifies it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixture {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    pub reply: String,
}

type Responder = Arc<dyn Fn(&ChatRequest) -> Option<String> + Send + Sync>;

/// Deterministic offline chat provider.
///
/// Lookup order: fixture by (role, prompt hash), then a programmatic
/// responder for the role, then the role's default reply. With none of
/// these the call reports the provider as unavailable, which sends callers
/// down their rule-based fallbacks.
#[derive(Clone, Default)]
pub struct StubChat {
    fixtures: HashMap<(Role, String), String>,
    responders: HashMap<Role, Responder>,
    defaults: HashMap<Role, String>,
    calls: Arc<AtomicUsize>,
}

impl std::fmt::Debug for StubChat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubChat")
            .field("fixtures", &self.fixtures.len())
            .field("defaults", &self.defaults.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn sha_hex(s: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(s.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl StubChat {
    pub fn new() -> Self {
        Self::default()
    }

    /// The stock stub used when nothing else is configured: the verifier
    /// accepts everything, every other role falls back to rules.
    pub fn standard() -> Self {
        Self::new().with_default(Role::Verifier, r#"{"verdict": "accept", "rationale": "stub verifier accepts"}"#)
    }

    pub fn with_default(mut self, role: Role, reply: &str) -> Self {
        self.defaults.insert(role, reply.to_string());
        self
    }

    pub fn with_responder(
        mut self,
        role: Role,
        f: impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        self.responders.insert(role, Arc::new(f));
        self
    }

    pub fn add_fixture(&mut self, fx: Fixture) {
        let hash = fx.prompt_sha256.clone().or_else(|| fx.prompt.as_deref().map(sha_hex)).unwrap_or_default();
        self.fixtures.insert((fx.role, hash), fx.reply);
    }

    /// Registers a reply for exactly this request.
    pub fn add_reply(&mut self, req: &ChatRequest, reply: &str) {
        self.fixtures.insert((req.role, req.prompt_hash()), reply.to_string());
    }

    /// Loads a JSONL fixture file (one [`Fixture`] per line).
    pub fn load_fixtures(&mut self, path: &Path) -> Result<usize, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut n = 0;
        for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fx: Fixture = serde_json::from_str(line).map_err(|e| format!("{}:{}: {e}", path.display(), k + 1))?;
            self.add_fixture(fx);
            n += 1;
        }
        Ok(n)
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatProvider for StubChat {
    fn chat(&self, req: &ChatRequest) -> Result<ChatExchange, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let reply = self
            .fixtures
            .get(&(req.role, req.prompt_hash()))
            .cloned()
            .or_else(|| self.responders.get(&req.role).and_then(|f| f(req)))
            .or_else(|| self.defaults.get(&req.role).cloned())
            .ok_or_else(|| ProviderError::unavailable(req.role, "no stub fixture for this prompt"))?;
        Ok(ChatExchange { system: req.system.clone(), parts: req.parts.clone(), reply, latency_ms: 0.0, attempts: 1 })
    }

    fn is_stub(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_reply() {
        let req = ChatRequest::text(Role::Parser, "sys", "find a chair");
        let mut s = StubChat::new();
        s.add_reply(&req, "canned");
        assert_eq!(s.chat(&req).unwrap().reply, "canned");
        assert_eq!(s.chat(&req).unwrap().attempts, 1);
    }

    #[test]
    fn fixture_by_raw_prompt() {
        let req = ChatRequest::text(Role::Relation, "sys", "u");
        let mut s = StubChat::new();
        s.add_fixture(Fixture { role: Role::Relation, prompt: Some("sys\nu".into()), prompt_sha256: None, reply: "r".into() });
        assert_eq!(s.chat(&req).unwrap().reply, "r");
    }

    #[test]
    fn missing_fixture_is_unavailable() {
        let s = StubChat::standard();
        let err = s.chat(&ChatRequest::text(Role::Parser, "sys", "x")).unwrap_err();
        assert!(matches!(err, ProviderError::Unavailable { role: Role::Parser, .. }));
        assert!(s.chat(&ChatRequest::text(Role::Verifier, "sys", "x")).unwrap().reply.contains("accept"));
    }
}
