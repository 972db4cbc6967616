use serde::{Deserialize, Serialize};

use crate::graph::{Aabb, BestViewRef, GraphError, MergedFields, ObjectNode, SceneGraph};
use crate::ids::{AreaId, FloorId, ObjectId, RoomId};
use crate::providers::cosine;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    #[default]
    Geometric,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    pub tau_iou3d: f64,
    pub tau_vis_strict: f64,
    pub tau_vis_open: f64,
    pub relaxed_radius_m: f64,
    pub cluster_radius_m: f64,
    pub near_distance_m: f64,
    /// Minimum valid depth samples for back-projection.
    pub k_min: usize,
    /// Labels treated as known categories. When empty the per-detection
    /// flag decides.
    pub known_categories: Vec<String>,
    pub topology_mode: TopologyMode,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            tau_iou3d: 0.25,
            tau_vis_strict: 0.80,
            tau_vis_open: 0.90,
            relaxed_radius_m: 0.75,
            cluster_radius_m: 1.5,
            near_distance_m: 1.0,
            k_min: 10,
            known_categories: Vec::new(),
            topology_mode: TopologyMode::Geometric,
        }
    }
}

impl AssociationConfig {
    pub fn is_known(&self, label: &str, flag: bool) -> bool {
        if self.known_categories.is_empty() {
            flag
        } else {
            self.known_categories.iter().any(|c| c.eq_ignore_ascii_case(label))
        }
    }
}

/// A back-projected detection ready for association.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub known_category: bool,
    pub embedding: Vec<f32>,
    pub description: String,
    pub centroid: [f64; 3],
    pub bbox3d: Aabb,
    pub floor_id: FloorId,
    pub room_id: Option<RoomId>,
    pub best_view: BestViewRef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeStage {
    Strict,
    KnownCategory,
    OpenVocabulary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub target: ObjectId,
    pub stage: MergeStage,
    pub cosine: f64,
    pub iou3d: f64,
    pub distance_m: f64,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Association {
    Merged(MergeRecord),
    Created(ObjectId),
}

impl Association {
    pub fn id(&self) -> ObjectId {
        match self {
            Association::Merged(m) => m.target,
            Association::Created(id) => *id,
        }
    }
}

/// Keeps the view whose box sits closer to the image centre; ties keep the
/// incumbent.
pub fn best_view_update(old: BestViewRef, new: BestViewRef) -> BestViewRef {
    if new.center_offset < old.center_offset {
        new
    } else {
        old
    }
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

struct Scored<'a> {
    node: &'a ObjectNode,
    cosine: f64,
    iou: f64,
    distance: f64,
}

/// Decides which existing node (if any) a candidate is a re-observation of.
pub fn match_candidate(graph: &SceneGraph, c: &Candidate, cfg: &AssociationConfig) -> Option<MergeRecord> {
    let pool: Vec<Scored> = graph
        .objects()
        .filter(|o| o.floor_id == c.floor_id)
        .map(|o| Scored {
            node: o,
            cosine: cosine(&c.embedding, &o.embedding),
            iou: c.bbox3d.iou(&o.bbox3d),
            distance: dist(c.centroid, o.centroid),
        })
        .collect();
    let record = |s: &Scored, stage| MergeRecord {
        target: s.node.id,
        stage,
        cosine: s.cosine,
        iou3d: s.iou,
        distance_m: s.distance,
        label: c.label.clone(),
    };
    // highest cosine, then nearest, then lowest id
    let by_cosine = |a: &&Scored, b: &&Scored| {
        b.cosine.total_cmp(&a.cosine).then(a.distance.total_cmp(&b.distance)).then(a.node.id.cmp(&b.node.id))
    };

    if let Some(s) = pool.iter().filter(|s| s.iou >= cfg.tau_iou3d && s.cosine >= cfg.tau_vis_strict).min_by(by_cosine) {
        return Some(record(s, MergeStage::Strict));
    }
    if c.known_category {
        let nearest = pool
            .iter()
            .filter(|s| s.node.label == c.label && s.distance <= cfg.relaxed_radius_m)
            .min_by(|a, b| {
                a.distance.total_cmp(&b.distance).then(b.cosine.total_cmp(&a.cosine)).then(a.node.id.cmp(&b.node.id))
            });
        return nearest.map(|s| record(s, MergeStage::KnownCategory));
    }
    pool.iter()
        .filter(|s| s.node.is_open_vocab && s.cosine >= cfg.tau_vis_open && s.distance <= cfg.relaxed_radius_m)
        .min_by(by_cosine)
        .map(|s| record(s, MergeStage::OpenVocabulary))
}

/// Updated node after folding one more observation into it.
pub fn merged_node(node: &ObjectNode, c: &Candidate) -> ObjectNode {
    let n = node.observation_count as f64;
    let mut out = node.clone();
    out.centroid = [0, 1, 2].map(|k| (node.centroid[k] * n + c.centroid[k]) / (n + 1.0));
    out.bbox3d = node.bbox3d.union(&c.bbox3d);
    out.observation_count += 1;
    out.best_view = best_view_update(node.best_view, c.best_view);
    if out.description.is_empty() {
        out.description = c.description.clone();
    }
    out
}

/// Applies the strict gate between existing nodes: any node on the same
/// floor whose box now overlaps `id`'s by at least `tau_iou3d`, with cosine
/// at least `tau_vis_strict`, is folded into the lower of the two ids.
/// Needed because boxes grow as more faces of an object are seen. Returns
/// the id that survives.
pub fn consolidate(graph: &mut SceneGraph, id: ObjectId, cfg: &AssociationConfig) -> Result<ObjectId, GraphError> {
    let mut cur = id;
    loop {
        let node = graph.object(cur)?;
        let other = graph
            .objects()
            .filter(|o| o.id != cur && o.floor_id == node.floor_id)
            .map(|o| (o, cosine(&node.embedding, &o.embedding), node.bbox3d.iou(&o.bbox3d)))
            .filter(|(_, c, iou)| *iou >= cfg.tau_iou3d && *c >= cfg.tau_vis_strict)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(a.2.total_cmp(&b.2)).then(b.0.id.cmp(&a.0.id)))
            .map(|(o, _, _)| o.id);
        let Some(other) = other else { return Ok(cur) };
        let (keep, gone) = if cur < other { (cur, other) } else { (other, cur) };
        let (a, b) = (graph.object(keep)?, graph.object(gone)?);
        let (na, nb) = (a.observation_count as f64, b.observation_count as f64);
        let fields = MergedFields {
            centroid: [0, 1, 2].map(|k| (a.centroid[k] * na + b.centroid[k] * nb) / (na + nb)),
            bbox3d: a.bbox3d.union(&b.bbox3d),
            embedding: a.embedding.clone(),
            description: if a.description.is_empty() { b.description.clone() } else { a.description.clone() },
            best_view: best_view_update(a.best_view, b.best_view),
        };
        graph.merge_objects(keep, gone, fields)?;
        cur = keep;
    }
}

/// Runs the two-stage cascade and applies the result to the graph.
pub fn associate(graph: &mut SceneGraph, c: &Candidate, cfg: &AssociationConfig) -> Result<Association, GraphError> {
    if let Some(m) = match_candidate(graph, c, cfg) {
        let updated = merged_node(graph.object(m.target)?, c);
        graph.upsert_object(updated)?;
        return Ok(Association::Merged(m));
    }
    let id = graph.allocate_object_id();
    let node = ObjectNode {
        id,
        label: c.label.clone(),
        is_open_vocab: !c.known_category,
        embedding: c.embedding.clone(),
        description: c.description.clone(),
        centroid: c.centroid,
        bbox3d: c.bbox3d,
        room_id: c.room_id,
        area_id: None::<AreaId>,
        floor_id: c.floor_id,
        best_view: c.best_view,
        observation_count: 1,
    };
    graph.upsert_object(node)?;
    Ok(Association::Created(id))
}
