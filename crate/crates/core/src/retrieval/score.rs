use std::collections::BTreeMap;

use super::types::{CandidateScore, ConstraintKind, ParsedQuery, Term};
use crate::graph::{Relation, SceneGraph};
use crate::ids::{AreaId, ObjectId, RoomId};
use crate::providers::{cosine, TextEmbedder};

/// Ranking key resolution: scores equal to 1e-9 are ties.
pub const SCORE_QUANTUM: f64 = 1e-9;

pub fn quantize(s: f64) -> i64 {
    (s / SCORE_QUANTUM).round() as i64
}

/// The text an object is matched against.
pub fn object_text(label: &str, description: &str) -> String {
    if description.is_empty() {
        label.to_string()
    } else {
        format!("{description} {label}")
    }
}

fn place_text(label: &str, summary: &str) -> String {
    format!("{label} {summary}").trim().to_string()
}

fn inverse(r: Relation) -> Option<Relation> {
    match r {
        Relation::Above => Some(Relation::Below),
        Relation::Below => Some(Relation::Above),
        Relation::Near | Relation::NextTo => Some(r),
        Relation::On | Relation::In => None,
    }
}

/// Similarity of graph nodes to the constraints of one query. Text
/// embeddings are computed once per scorer.
pub struct Scorer<'a> {
    graph: &'a SceneGraph,
    query: &'a ParsedQuery,
    constraint_vec: Vec<Option<Vec<f32>>>,
    object_vec: BTreeMap<ObjectId, Vec<f32>>,
    room_vec: BTreeMap<RoomId, Vec<f32>>,
    area_vec: BTreeMap<AreaId, Vec<f32>>,
    adjacency: BTreeMap<ObjectId, Vec<(Relation, ObjectId)>>,
}

fn embed(e: &dyn TextEmbedder, text: &str) -> Option<Vec<f32>> {
    e.embed(text).ok()
}

impl<'a> Scorer<'a> {
    pub fn new(graph: &'a SceneGraph, query: &'a ParsedQuery, embedder: &dyn TextEmbedder) -> Self {
        let constraint_vec = query
            .constraints
            .iter()
            .map(|c| match c.kind {
                ConstraintKind::Floor => None,
                ConstraintKind::Relation => embed(embedder, c.reference.as_deref().unwrap_or(&c.text)),
                _ => embed(embedder, &c.text),
            })
            .collect();
        let object_vec = graph
            .objects()
            .filter_map(|o| embed(embedder, &object_text(&o.label, &o.description)).map(|v| (o.id, v)))
            .collect();
        let room_vec = graph
            .rooms()
            .filter_map(|r| embed(embedder, &place_text(&r.label, &r.summary)).map(|v| (r.id, v)))
            .collect();
        let area_vec = graph
            .areas()
            .filter_map(|a| embed(embedder, &place_text(&a.label, &a.summary)).map(|v| (a.id, v)))
            .collect();
        let mut adjacency: BTreeMap<ObjectId, Vec<(Relation, ObjectId)>> = BTreeMap::new();
        for e in graph.edges() {
            adjacency.entry(e.src).or_default().push((e.relation, e.dst));
            if let Some(inv) = inverse(e.relation) {
                adjacency.entry(e.dst).or_default().push((inv, e.src));
            }
        }
        Scorer { graph, query, constraint_vec, object_vec, room_vec, area_vec, adjacency }
    }

    fn cos(&self, c: usize, v: Option<&Vec<f32>>) -> f64 {
        match (&self.constraint_vec[c], v) {
            (Some(a), Some(b)) => cosine(a, b).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }

    fn attr_sim(&self, node: ObjectId, c: usize) -> f64 {
        self.cos(c, self.object_vec.get(&node))
    }

    /// Best reference of relation constraint `c` seen from `node`: the
    /// related object most similar to the reference text (ties to the lower
    /// id). Only positive similarities count.
    pub fn best_reference(&self, node: ObjectId, c: usize) -> Option<(ObjectId, f64)> {
        let rel = self.query.constraints[c].relation?;
        let mut best: Option<(ObjectId, f64)> = None;
        for (r, m) in self.adjacency.get(&node).map(|v| v.as_slice()).unwrap_or(&[]) {
            if *r != rel {
                continue;
            }
            let s = self.attr_sim(*m, c);
            let better = match best {
                None => s > 0.0,
                Some((bm, bs)) => s > bs || (s == bs && *m < bm),
            };
            if better {
                best = Some((*m, s));
            }
        }
        best
    }

    /// The object constraint `c` talks about when scoring `node`.
    fn subject(&self, node: ObjectId, c: usize) -> Option<ObjectId> {
        match self.query.constraints[c].of {
            None => Some(node),
            Some(p) if p < c => {
                let s = self.subject(node, p)?;
                self.best_reference(s, p).map(|(m, _)| m)
            }
            Some(_) => None,
        }
    }

    pub fn sim(&self, node: ObjectId, c: usize) -> f64 {
        let Some(s) = self.subject(node, c) else { return 0.0 };
        let Ok(obj) = self.graph.object(s) else { return 0.0 };
        match self.query.constraints[c].kind {
            ConstraintKind::TargetAttribute | ConstraintKind::Description => self.attr_sim(s, c),
            ConstraintKind::Room => self.cos(c, obj.room_id.and_then(|r| self.room_vec.get(&r))),
            ConstraintKind::Area => self.cos(c, obj.area_id.and_then(|a| self.area_vec.get(&a))),
            ConstraintKind::Relation => self.best_reference(s, c).map(|(_, v)| v).unwrap_or(0.0),
            ConstraintKind::Floor => 0.0,
        }
    }

    pub fn h_floor(&self, node: ObjectId) -> u8 {
        let Some(want) = self.query.target_floor else { return 1 };
        let idx = self.graph.object(node).ok().and_then(|o| self.graph.floor(o.floor_id)).map(|f| f.index);
        u8::from(idx == Some(want))
    }

    pub fn score(&self, node: ObjectId) -> CandidateScore {
        let h = self.h_floor(node);
        let terms: Vec<Term> = self
            .query
            .constraints
            .iter()
            .filter(|c| c.kind != ConstraintKind::Floor)
            .map(|c| Term { index: c.index, polarity: c.polarity, weight: c.weight, sim: self.sim(node, c.index) })
            .collect();
        let sum: f64 = terms.iter().map(|t| t.polarity as f64 * t.weight * t.sim).sum();
        let reference_distance_m = self
            .query
            .constraints
            .iter()
            .find(|c| c.kind == ConstraintKind::Relation && c.of.is_none())
            .and_then(|c| self.best_reference(node, c.index))
            .and_then(|(m, _)| {
                let a = self.graph.object(node).ok()?.centroid;
                let b = self.graph.object(m).ok()?.centroid;
                Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
            });
        CandidateScore { object_id: node, h_floor: h, terms, score: h as f64 * sum, reference_distance_m }
    }
}

/// Candidate order: higher S, then nearer reference, then lower id.
pub fn candidate_order(a: &CandidateScore, b: &CandidateScore) -> std::cmp::Ordering {
    quantize(b.score)
        .cmp(&quantize(a.score))
        .then_with(|| {
            let da = a.reference_distance_m.unwrap_or(f64::INFINITY);
            let db = b.reference_distance_m.unwrap_or(f64::INFINITY);
            da.total_cmp(&db)
        })
        .then(a.object_id.cmp(&b.object_id))
}

/// Scores every object passing the floor filter and returns the best `k`.
pub fn rank(graph: &SceneGraph, query: &ParsedQuery, embedder: &dyn TextEmbedder, k: usize) -> Vec<CandidateScore> {
    let scorer = Scorer::new(graph, query, embedder);
    let mut all: Vec<CandidateScore> = graph
        .objects()
        .map(|o| o.id)
        .filter(|id| scorer.h_floor(*id) == 1)
        .map(|id| scorer.score(id))
        .collect();
    all.sort_by(candidate_order);
    all.truncate(k.max(1));
    all
}

pub fn score_candidate(
    graph: &SceneGraph,
    node: ObjectId,
    query: &ParsedQuery,
    embedder: &dyn TextEmbedder,
) -> CandidateScore {
    Scorer::new(graph, query, embedder).score(node)
}
