//! Exhaustive reference scorer, written without the retrieval module's
//! scoring code so that the two can be compared.

use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::HashMap;

use crate::graph::{Relation, SceneGraph};
use crate::ids::ObjectId;
use crate::providers::{cosine, TextEmbedder};
use crate::retrieval::{ConstraintKind, ParsedQuery};


fn joined(a: &str, b: &str) -> String {
    format!("{a} {b}").trim().to_string()
}

/// Edge list per object, reading symmetric edges both ways and
/// above/below as inverses.
fn edge_table(g: &SceneGraph) -> HashMap<ObjectId, Vec<(Relation, ObjectId)>> {
    let mut out: HashMap<ObjectId, Vec<(Relation, ObjectId)>> = HashMap::new();
    for e in g.edges() {
        out.entry(e.src).or_default().push((e.relation, e.dst));
        let back = match e.relation {
            Relation::Near => Some(Relation::Near),
            Relation::NextTo => Some(Relation::NextTo),
            Relation::Above => Some(Relation::Below),
            Relation::Below => Some(Relation::Above),
            _ => None,
        };
        if let Some(b) = back {
            out.entry(e.dst).or_default().push((b, e.src));
        }
    }
    out
}

struct Ctx<'a> {
    g: &'a SceneGraph,
    q: &'a ParsedQuery,
    e: &'a dyn TextEmbedder,
    edges: HashMap<ObjectId, Vec<(Relation, ObjectId)>>,
    vectors: RefCell<HashMap<String, Option<Vec<f32>>>>,
}

impl<'a> Ctx<'a> {
    fn new(g: &'a SceneGraph, q: &'a ParsedQuery, e: &'a dyn TextEmbedder) -> Self {
        Ctx { g, q, e, edges: edge_table(g), vectors: RefCell::new(HashMap::new()) }
    }

    fn vector(&self, text: &str) -> Option<Vec<f32>> {
        if let Some(v) = self.vectors.borrow().get(text) {
            return v.clone();
        }
        let v = self.e.embed(text).ok();
        self.vectors.borrow_mut().insert(text.to_string(), v.clone());
        v
    }

    fn text_sim(&self, a: &str, b: &str) -> f64 {
        match (self.vector(a), self.vector(b)) {
            (Some(x), Some(y)) => cosine(&x, &y).clamp(0.0, 1.0),
            _ => 0.0,
        }
    }

    fn neighbours(&self, node: ObjectId, rel: Relation) -> Vec<ObjectId> {
        self.edges.get(&node).map(|v| v.iter().filter(|x| x.0 == rel).map(|x| x.1).collect()).unwrap_or_default()
    }
}

fn object_words(g: &SceneGraph, id: ObjectId) -> String {
    g.object(id).map(|o| joined(&o.description, &o.label)).unwrap_or_default()
}

fn best_ref(x: &Ctx, node: ObjectId, c: usize) -> Option<(ObjectId, f64)> {
    let g = x.g;
    let con = &x.q.constraints[c];
    let rel = con.relation?;
    let reference = con.reference.clone().unwrap_or_else(|| con.text.clone());
    let mut hits: Vec<(ObjectId, f64)> = x
        .neighbours(node, rel)
        .into_iter()
        .map(|m| (m, x.text_sim(&reference, &object_words(g, m))))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    hits.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    hits.first().copied()
}

fn subject_of(x: &Ctx, node: ObjectId, c: usize) -> Option<ObjectId> {
    match x.q.constraints[c].of {
        None => Some(node),
        Some(p) if p < c => {
            let s = subject_of(x, node, p)?;
            best_ref(x, s, p).map(|r| r.0)
        }
        Some(_) => None,
    }
}

fn constraint_sim(x: &Ctx, node: ObjectId, c: usize) -> f64 {
    let g = x.g;
    let con = &x.q.constraints[c];
    let Some(s) = subject_of(x, node, c) else { return 0.0 };
    let Ok(obj) = g.object(s) else { return 0.0 };
    match con.kind {
        ConstraintKind::TargetAttribute | ConstraintKind::Description => x.text_sim(&con.text, &object_words(g, s)),
        ConstraintKind::Room => obj
            .room_id
            .and_then(|r| g.room(r))
            .map(|r| x.text_sim(&con.text, &joined(&r.label, &r.summary)))
            .unwrap_or(0.0),
        ConstraintKind::Area => obj
            .area_id
            .and_then(|a| g.area(a))
            .map(|a| x.text_sim(&con.text, &joined(&a.label, &a.summary)))
            .unwrap_or(0.0),
        ConstraintKind::Relation => best_ref(x, s, c).map(|r| r.1).unwrap_or(0.0),
        ConstraintKind::Floor => 0.0,
    }
}

/// One object's oracle score, or `None` when the floor filter removes it.
pub fn oracle_score(g: &SceneGraph, q: &ParsedQuery, e: &dyn TextEmbedder, node: ObjectId) -> Option<(f64, f64)> {
    score_in(&Ctx::new(g, q, e), node)
}

fn score_in(x: &Ctx, node: ObjectId) -> Option<(f64, f64)> {
    let (g, q) = (x.g, x.q);
    let obj = g.object(node).ok()?;
    if let Some(want) = q.target_floor {
        if g.floor(obj.floor_id).map(|f| f.index) != Some(want) {
            return None;
        }
    }
    let mut s = 0.0;
    for c in &q.constraints {
        if c.kind == ConstraintKind::Floor {
            continue;
        }
        s += c.polarity as f64 * c.weight * constraint_sim(x, node, c.index);
    }
    let tie = q
        .constraints
        .iter()
        .find(|c| c.kind == ConstraintKind::Relation && c.of.is_none())
        .and_then(|c| best_ref(x, node, c.index))
        .and_then(|(m, _)| {
            let a = obj.centroid;
            let b = g.object(m).ok()?.centroid;
            Some(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
        })
        .unwrap_or(f64::INFINITY);
    Some((s, tie))
}

/// Every surviving object in oracle order: score (at 1e-9 resolution),
/// then nearer first reference, then lower id.
pub fn oracle_rank(g: &SceneGraph, q: &ParsedQuery, e: &dyn TextEmbedder, k: usize) -> Vec<(ObjectId, f64)> {
    let ctx = Ctx::new(g, q, e);
    let mut all: Vec<(ObjectId, f64, f64)> =
        g.objects().filter_map(|o| score_in(&ctx, o.id).map(|(s, t)| (o.id, s, t))).collect();
    let q9 = |x: f64| (x / 1e-9).round() as i64;
    all.sort_by(|a, b| match q9(b.1).cmp(&q9(a.1)) {
        Ordering::Equal => a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)),
        o => o,
    });
    all.truncate(k);
    all.into_iter().map(|(id, s, _)| (id, s)).collect()
}

pub fn oracle_retrieve(g: &SceneGraph, q: &ParsedQuery, e: &dyn TextEmbedder) -> Option<ObjectId> {
    oracle_rank(g, q, e, 1).first().map(|x| x.0)
}
