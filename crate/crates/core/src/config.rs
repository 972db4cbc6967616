//! Layered run configuration: built-in defaults, then a TOML file, then
//! `key=value` overrides, then the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::geometry::GeometryConfig;
use crate::providers::{ProviderConfig, ProviderError, ProviderMode, Providers, Role, StubChat};
use crate::retrieval::RetrievalConfig;
use crate::semantic::AssociationConfig;
use crate::supervisor::{SupervisorMode, TriggerConfig, UpdateConfig};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "IKB_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("unknown config key `{key}` (from {origin})")]
    UnknownKey { key: String, origin: String },
    #[error("override `{0}` is not of the form key=value")]
    BadOverride(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProvidersConfig {
    pub parser: ProviderConfig,
    pub supervisor: ProviderConfig,
    pub relation: ProviderConfig,
    pub verifier: ProviderConfig,
    pub summarizer: ProviderConfig,
    pub embedder: ProviderConfig,
}

impl ProvidersConfig {
    pub fn get(&self, role: Role) -> &ProviderConfig {
        match role {
            Role::Parser => &self.parser,
            Role::Supervisor => &self.supervisor,
            Role::Relation => &self.relation,
            Role::Verifier => &self.verifier,
            Role::Summarizer => &self.summarizer,
            Role::Embedder => &self.embedder,
        }
    }

    pub fn get_mut(&mut self, role: Role) -> &mut ProviderConfig {
        match role {
            Role::Parser => &mut self.parser,
            Role::Supervisor => &mut self.supervisor,
            Role::Relation => &mut self.relation,
            Role::Verifier => &mut self.verifier,
            Role::Summarizer => &mut self.summarizer,
            Role::Embedder => &mut self.embedder,
        }
    }

    pub fn set_mode(&mut self, mode: ProviderMode) {
        for r in Role::ALL {
            self.get_mut(r).mode = mode;
        }
    }
}

/// Providers for every role: stubs share `stub`'s fixtures, http roles get
/// their own client.
pub fn build_providers(cfg: &ProvidersConfig, dim: usize, stub: StubChat) -> Result<Providers, ProviderError> {
    #[cfg_attr(not(feature = "http"), allow(unused_mut))]
    let mut out = Providers::stub(dim, stub);
    for role in Role::ALL {
        let c = cfg.get(role);
        c.validate(role)?;
        if c.mode == ProviderMode::Stub {
            continue;
        }
        #[cfg(feature = "http")]
        {
            use crate::providers::http::{HttpChat, HttpEmbedder};
            if role == Role::Embedder {
                out.embedder = std::sync::Arc::new(HttpEmbedder::new(c.clone(), dim)?);
            } else {
                let p: std::sync::Arc<dyn crate::providers::ChatProvider> = std::sync::Arc::new(HttpChat::new(role, c.clone())?);
                out.set_chat(role, p);
            }
        }
        #[cfg(not(feature = "http"))]
        return Err(ProviderError::InvalidConfig(format!("{role}: built without the http feature")));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub embedding_dim: usize,
    /// Capacity of the keyframe queue between the two streams.
    pub queue_capacity: usize,
    /// Written to the map manifest; fixed so repeated builds match.
    pub created_at: u64,
    /// Write a BEV PNG for every hierarchy update.
    pub write_bev: bool,
    pub supervisor: SupervisorMode,
    pub geometry: GeometryConfig,
    pub association: AssociationConfig,
    pub triggers: TriggerConfig,
    pub update: UpdateConfig,
    pub retrieval: RetrievalConfig,
    pub providers: ProvidersConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            embedding_dim: 384,
            queue_capacity: 64,
            created_at: 0,
            write_bev: true,
            supervisor: SupervisorMode::Rules,
            geometry: GeometryConfig::default(),
            association: AssociationConfig::default(),
            triggers: TriggerConfig::default(),
            update: UpdateConfig::default(),
            retrieval: RetrievalConfig::default(),
            providers: ProvidersConfig::default(),
        }
    }
}

/// Where each layer came from, for the reproducibility header.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Sources {
    pub file: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub env: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub config: RunConfig,
    pub sources: Sources,
}

fn merge(into: &mut Table, from: Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(Value::Table(a)), Value::Table(b)) => merge(a, b),
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

/// Sets a dotted key, creating intermediate tables.
fn set_path(t: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.trim().is_empty()) {
        return Err(ConfigError::BadOverride(key.to_string()));
    }
    let mut cur = t;
    for p in &parts[..parts.len() - 1] {
        let next = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match next {
            Value::Table(t) => t,
            _ => return Err(ConfigError::Invalid(format!("`{key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// A TOML literal when the text parses as one, otherwise a plain string.
fn literal(text: &str) -> Value {
    let wrapped = format!("v = {text}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.to_string())),
        Err(_) => Value::String(text.to_string()),
    }
}

fn decode(table: Table, origin: &str) -> Result<RunConfig, ConfigError> {
    let mut unknown = Vec::new();
    let cfg: RunConfig = serde_ignored::deserialize(Value::Table(table), |p| unknown.push(p.to_string()))
        .map_err(|e| ConfigError::Parse { origin: origin.to_string(), message: e.to_string() })?;
    if let Some(key) = unknown.into_iter().next() {
        return Err(ConfigError::UnknownKey { key, origin: origin.to_string() });
    }
    Ok(cfg)
}

fn defaults_table() -> Table {
    match Value::try_from(RunConfig::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("defaults serialize to a table"),
    }
}

impl RunConfig {
    /// Resolves all layers. `file` falls back to `$IKB_CONFIG` when unset;
    /// `env` is the environment to read (usually `std::env::vars()`).
    pub fn resolve(
        file: Option<&Path>,
        overrides: &[String],
        env: &BTreeMap<String, String>,
    ) -> Result<Resolved, ConfigError> {
        let mut sources = Sources::default();
        let mut table = defaults_table();

        let file = file.map(Path::to_path_buf).or_else(|| env.get(CONFIG_ENV).filter(|s| !s.is_empty()).map(PathBuf::from));
        if let Some(path) = &file {
            let text =
                std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.clone(), source })?;
            let origin = path.display().to_string();
            let t: Table =
                text.parse().map_err(|e: toml::de::Error| ConfigError::Parse { origin: origin.clone(), message: e.to_string() })?;
            decode(t.clone(), &origin)?;
            merge(&mut table, t);
            sources.file = Some(path.clone());
        }

        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            let mut one = Table::new();
            set_path(&mut one, k.trim(), literal(v.trim()))?;
            decode(one.clone(), &format!("override {o}"))?;
            merge(&mut table, one);
            sources.overrides.push(o.clone());
        }

        let mut config = decode(table, "merged configuration")?;
        for role in Role::ALL {
            let prefix = role.env_prefix();
            let p = config.providers.get_mut(role);
            if let Some(v) = env.get(&format!("{prefix}ENDPOINT")).filter(|v| !v.is_empty()) {
                p.endpoint = Some(v.clone());
                p.mode = ProviderMode::Http;
                sources.env.push(format!("{prefix}ENDPOINT"));
            }
            if let Some(v) = env.get(&format!("{prefix}MODEL")).filter(|v| !v.is_empty()) {
                p.model = Some(v.clone());
                sources.env.push(format!("{prefix}MODEL"));
            }
            let token = format!("{prefix}TOKEN");
            if env.contains_key(&token) {
                p.token_env = Some(token.clone());
                sources.env.push(token);
            }
        }
        config.validate()?;
        Ok(Resolved { config, sources })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.embedding_dim == 0 {
            return Err(ConfigError::Invalid("embedding_dim must be positive".into()));
        }
        if self.queue_capacity == 0 {
            return Err(ConfigError::Invalid("queue_capacity must be at least 1".into()));
        }
        if !(self.geometry.resolution_m > 0.0) {
            return Err(ConfigError::Invalid("geometry.resolution_m must be positive".into()));
        }
        if self.association.tau_vis_open < self.association.tau_vis_strict {
            return Err(ConfigError::Invalid("association.tau_vis_open must be >= tau_vis_strict".into()));
        }
        for role in Role::ALL {
            self.providers.get(role).validate(role).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}

impl Resolved {
    /// The fully resolved configuration as TOML comments, printed before a
    /// run so results can be reproduced.
    pub fn header(&self) -> String {
        let s = &self.sources;
        let mut out = String::from("# precedence: defaults < config file < --set < environment\n");
        out.push_str(&format!(
            "# config file: {}\n",
            s.file.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into())
        ));
        out.push_str(&format!("# overrides: {}\n", if s.overrides.is_empty() { "none".into() } else { s.overrides.join(" ") }));
        out.push_str(&format!("# environment: {}\n", if s.env.is_empty() { "none".into() } else { s.env.join(" ") }));
        for line in self.config.to_toml().lines() {
            out.push_str("#   ");
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn layers_apply_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 7\n[geometry]\ntau_sim = 0.6\n[retrieval]\nk = 9\n").unwrap();
        let r = RunConfig::resolve(
            Some(&path),
            &["retrieval.k=3".into(), "providers.verifier.timeout_s=5".into()],
            &env(&[("IKB_VERIFIER_ENDPOINT", "http://127.0.0.1:9"), ("IKB_VERIFIER_MODEL", "m")]),
        )
        .unwrap();
        let c = &r.config;
        assert_eq!(c.seed, 7);
        assert_eq!(c.geometry.tau_sim, 0.6);
        assert_eq!(c.retrieval.k, 3);
        assert_eq!(c.providers.verifier.timeout_s, 5.0);
        assert_eq!(c.providers.verifier.mode, ProviderMode::Http);
        assert_eq!(c.providers.parser.mode, ProviderMode::Stub);
        assert!(r.header().contains("IKB_VERIFIER_ENDPOINT"));
    }

    #[test]
    fn config_env_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "queue_capacity = 3\n").unwrap();
        let r = RunConfig::resolve(None, &[], &env(&[(CONFIG_ENV, path.to_str().unwrap())])).unwrap();
        assert_eq!(r.config.queue_capacity, 3);
    }

    #[test]
    fn typos_are_rejected() {
        let e = RunConfig::resolve(None, &["geometry.tau_smi=0.5".into()], &BTreeMap::new()).unwrap_err();
        assert!(matches!(e, ConfigError::UnknownKey { .. }), "{e}");
        assert!(RunConfig::resolve(None, &["geometry".into()], &BTreeMap::new()).is_err());
        assert!(RunConfig::resolve(None, &["queue_capacity=0".into()], &BTreeMap::new()).is_err());
    }

    #[test]
    fn http_roles_get_clients() {
        let mut p = ProvidersConfig::default();
        assert!(build_providers(&p, 8, StubChat::new()).unwrap().all_stub());
        p.verifier = ProviderConfig {
            mode: ProviderMode::Http,
            endpoint: Some("http://127.0.0.1:9".into()),
            model: Some("m".into()),
            ..Default::default()
        };
        let built = build_providers(&p, 8, StubChat::new()).unwrap();
        assert!(!built.verifier.is_stub() && built.parser.is_stub());
    }

    #[test]
    fn string_overrides_need_no_quotes() {
        let r = RunConfig::resolve(None, &["supervisor=model".into()], &BTreeMap::new()).unwrap();
        assert_eq!(r.config.supervisor, SupervisorMode::Model);
    }
}
