//! Query parsing into signed, weighted constraints; scoring; ranking;
//! visual audit; temporal memory fusion.

pub mod explain;
pub mod model;
pub mod rules;
pub mod score;
pub mod types;
pub mod verify;

use log::warn;
use serde::{Deserialize, Serialize};

pub use explain::breakdown_table;
pub use model::parse_query_model;
pub use rules::parse_query_rules;
pub use score::{candidate_order, object_text, quantize, rank, score_candidate, Scorer};
pub use types::*;
pub use verify::{best_view_crop, verify_candidate};

use crate::clock::Stopwatch;
use crate::graph::{GraphError, KeyframeStore, SceneGraph};
use crate::ids::ObjectId;
use crate::providers::latency::QUERY_TOTAL;
use crate::providers::{prompts, ChatRequest, Providers, Role};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserMode {
    #[default]
    Rules,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub verify_budget: usize,
    pub verify: bool,
    pub parser: ParserMode,
    pub max_desc_len: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { k: 5, verify_budget: 3, verify: true, parser: ParserMode::Rules, max_desc_len: 512 }
    }
}

pub fn parse(text: &str, providers: &Providers, mode: ParserMode) -> Result<(ParsedQuery, &'static str), ParseError> {
    match mode {
        ParserMode::Rules => parse_query_rules(text).map(|q| (q, "rules")),
        ParserMode::Model => parse_query_model(text, providers),
    }
}

/// Parse, rank, audit. Rejected candidates are skipped in rank order
/// until one is accepted or the budget runs out; then the best-scored
/// candidate is returned as unverified.
pub fn retrieve(
    graph: &SceneGraph,
    store: &KeyframeStore,
    text: &str,
    providers: &Providers,
    cfg: &RetrievalConfig,
) -> Result<RetrievalAnswer, ParseError> {
    let clock = Stopwatch::start();
    let (query, parser) = parse(text, providers, cfg.parser)?;
    let candidates = rank(graph, &query, providers.embedder.as_ref(), cfg.k.max(1));
    let mut verifications = Vec::new();
    let mut chosen = None;
    let status = if candidates.is_empty() {
        AnswerStatus::NoCandidates
    } else if !cfg.verify {
        chosen = Some(0);
        AnswerStatus::NotChecked
    } else {
        for (k, c) in candidates.iter().take(cfg.verify_budget).enumerate() {
            let Ok(obj) = graph.object(c.object_id) else { continue };
            let v = verify_candidate(obj, text, store, providers);
            let accepted = v.verdict == Verdict::Accept;
            verifications.push(v);
            if accepted {
                chosen = Some(k);
                break;
            }
        }
        if chosen.is_some() {
            AnswerStatus::Verified
        } else {
            chosen = Some(0);
            AnswerStatus::Unverified
        }
    };
    let best = chosen.map(|k| candidates[k].clone());
    let obj = best.as_ref().and_then(|b| graph.object(b.object_id).ok());
    let answer = RetrievalAnswer {
        object_id: obj.map(|o| o.id),
        centroid: obj.map(|o| o.centroid),
        label: obj.map(|o| o.label.clone()),
        status,
        score: best,
        audit: AuditTrail { query, parser: parser.to_string(), candidates, verifications },
    };
    providers.latency.record(QUERY_TOTAL, clock.elapsed_ms());
    Ok(answer)
}

#[derive(Debug, thiserror::Error)]
pub enum FuseError {
    #[error("interaction text is empty")]
    EmptyInteraction,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Keeps the newest `max` characters, cutting at a word boundary when one
/// is available.
pub fn truncate_oldest(text: &str, max: usize) -> String {
    let n = text.chars().count();
    if n <= max {
        return text.to_string();
    }
    let tail: String = text.chars().skip(n - max).collect();
    match tail.find(' ') {
        Some(p) if p + 1 < tail.len() && tail[p + 1..].chars().count() * 2 >= max => tail[p + 1..].to_string(),
        _ => tail,
    }
}

/// Offline fusion: append, then drop the oldest text past the limit.
pub fn stub_fuse(old: &str, interaction: &str, max: usize) -> String {
    let joined = if old.trim().is_empty() {
        interaction.trim().to_string()
    } else {
        format!("{} {}", old.trim(), interaction.trim())
    };
    truncate_oldest(&joined, max)
}

/// Folds an interaction into an object's description and stores it.
pub fn fuse_temporal_memory(
    graph: &mut SceneGraph,
    id: ObjectId,
    interaction: &str,
    providers: &Providers,
    max_desc_len: usize,
) -> Result<String, FuseError> {
    if interaction.trim().is_empty() {
        return Err(FuseError::EmptyInteraction);
    }
    let mut node = graph.object(id)?.clone();
    let req = ChatRequest::text(
        Role::Summarizer,
        prompts::MEMORY_FUSION,
        format!("Current description: {}\nInteraction: {}", node.description, interaction.trim()),
    );
    let fused = match providers.chat(&req) {
        Ok(x) if !x.reply.trim().is_empty() => truncate_oldest(x.reply.trim(), max_desc_len),
        Ok(_) => stub_fuse(&node.description, interaction, max_desc_len),
        Err(e) => {
            warn!("memory fusion via stub: {e}");
            stub_fuse(&node.description, interaction, max_desc_len)
        }
    };
    node.description = fused.clone();
    graph.upsert_object(node)?;
    Ok(fused)
}
