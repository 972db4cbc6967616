use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::Relation;
use crate::ids::{KeyframeId, ObjectId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    TargetAttribute,
    Room,
    Area,
    Floor,
    Relation,
    Description,
}

impl ConstraintKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "target_attribute" | "target" | "attribute" => ConstraintKind::TargetAttribute,
            "room" => ConstraintKind::Room,
            "area" => ConstraintKind::Area,
            "floor" => ConstraintKind::Floor,
            "relation" => ConstraintKind::Relation,
            "description" => ConstraintKind::Description,
            _ => return None,
        })
    }
}

/// One atomic, signed, weighted condition of a query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub index: usize,
    pub kind: ConstraintKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation: Option<Relation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// When set, the constraint describes the reference object of the
    /// relation constraint with this index instead of the target.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub of: Option<usize>,
    pub polarity: i8,
    pub weight: f64,
}

impl Constraint {
    pub fn new(kind: ConstraintKind, text: impl Into<String>) -> Self {
        Constraint {
            index: 0,
            kind,
            text: text.into(),
            relation: None,
            reference: None,
            of: None,
            polarity: 1,
            weight: 0.0,
        }
    }

    pub fn relation(rel: Relation, reference: impl Into<String>) -> Self {
        let reference = reference.into();
        Constraint {
            relation: Some(rel),
            text: format!("{} {}", rel.as_str().replace('_', " "), reference),
            reference: Some(reference),
            ..Constraint::new(ConstraintKind::Relation, "")
        }
    }

    pub fn negated(mut self) -> Self {
        self.polarity = -self.polarity;
        self
    }

    pub fn of(mut self, parent: usize) -> Self {
        self.of = Some(parent);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedQuery {
    pub raw: String,
    pub constraints: Vec<Constraint>,
    /// 1-based floor index named by the query, if any.
    pub target_floor: Option<u32>,
}

impl ParsedQuery {
    pub fn k(&self) -> usize {
        self.constraints.len()
    }

    /// Renumbers constraints, derives the target floor and normalizes
    /// weights over the scoring constraints (floor constraints carry weight
    /// 0: they act only through the hard filter). Zero total weight falls
    /// back to uniform.
    pub fn finalize(raw: &str, mut constraints: Vec<Constraint>) -> ParsedQuery {
        let mut target_floor = None;
        for (i, c) in constraints.iter_mut().enumerate() {
            c.index = i;
            if c.kind == ConstraintKind::Floor {
                target_floor = parse_floor_index(&c.text);
                c.weight = 0.0;
            }
            if !(c.weight.is_finite() && c.weight >= 0.0) {
                c.weight = 0.0;
            }
        }
        let scoring = constraints.iter().filter(|c| c.kind != ConstraintKind::Floor).count();
        let total: f64 = constraints.iter().map(|c| c.weight).sum();
        for c in constraints.iter_mut().filter(|c| c.kind != ConstraintKind::Floor) {
            c.weight = if total > 0.0 { c.weight / total } else { 1.0 / scoring as f64 };
        }
        ParsedQuery { raw: raw.to_string(), constraints, target_floor }
    }
}

const ORDINALS: &[&str] = &["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth"];

/// "2", "floor 2", "second" → 2. Ground floor is floor 1.
pub fn parse_floor_index(text: &str) -> Option<u32> {
    for w in crate::text::words(text) {
        if let Ok(n) = w.parse::<u32>() {
            return Some(n);
        }
        if let Some(k) = ORDINALS.iter().position(|o| *o == w) {
            return Some(k as u32 + 1);
        }
        if w == "ground" {
            return Some(1);
        }
        if let Some(n) = w.strip_suffix("st").or(w.strip_suffix("nd")).or(w.strip_suffix("rd")).or(w.strip_suffix("th")) {
            if let Ok(n) = n.parse::<u32>() {
                return Some(n);
            }
        }
    }
    None
}

#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("cannot parse query at bytes {start}..{end} ({fragment:?}): {message}")]
pub struct ParseError {
    pub message: String,
    pub start: usize,
    pub end: usize,
    pub fragment: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub index: usize,
    pub polarity: i8,
    pub weight: f64,
    pub sim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub object_id: ObjectId,
    pub h_floor: u8,
    pub terms: Vec<Term>,
    pub score: f64,
    /// Distance to the best-matching reference of the first relation
    /// constraint; used only to break ties.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_distance_m: Option<f64>,
}

impl CandidateScore {
    /// S recomputed from the stored terms.
    pub fn recompute(&self) -> f64 {
        self.h_floor as f64 * self.terms.iter().map(|t| t.polarity as f64 * t.weight * t.sim).sum::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
    ProviderUnavailable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub object_id: ObjectId,
    pub verdict: Verdict,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyframe_id: Option<KeyframeId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerStatus {
    /// A candidate passed the visual audit.
    Verified,
    /// Verification ran and no candidate in budget passed.
    Unverified,
    /// Verification disabled; the top-ranked candidate is returned.
    NotChecked,
    /// No object passed the hard filter.
    NoCandidates,
}

/// The interpretability record of one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditTrail {
    pub query: ParsedQuery,
    pub parser: String,
    pub candidates: Vec<CandidateScore>,
    pub verifications: Vec<VerificationResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalAnswer {
    pub object_id: Option<ObjectId>,
    pub centroid: Option<[f64; 3]>,
    pub label: Option<String>,
    pub status: AnswerStatus,
    pub score: Option<CandidateScore>,
    pub audit: AuditTrail,
}
