//! Ground truth bundles and graphs built directly from world truth.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::queries::QueryInstance;
use super::sequence::DetectionTruth;
use super::world::{RelationTruth, WorldSpec};
use super::SynthError;
use crate::geometry::pose::Pose;
use crate::graph::{
    Aabb, BestViewRef, EdgeSource, FloorNode, GraphError, GraphSettings, KeyframeStore, ObjectNode, PixelRect,
    SceneGraph, SpatialEdge,
};
use crate::ids::{FloorId, KeyframeId, ObjectId};
use crate::providers::{ChatRequest, HashEmbedder, TextEmbedder};
use crate::raster::Rgb;
use crate::supervisor::bev::room_color;
use crate::supervisor::labels::{stub_area_label, stub_area_summary};

/// Camera height floors are centred on, and the half-height of each band.
pub const FLOOR_BAND_CENTRE_M: f64 = 1.2;
pub const FLOOR_BAND_HALF_M: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub object: u64,
    pub floor: u32,
    pub room: usize,
    pub group: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Emitted detection → world object.
    pub identity: Vec<DetectionTruth>,
    pub assignments: Vec<Assignment>,
    pub relations: Vec<RelationTruth>,
    pub queries: Vec<QueryInstance>,
}

impl GroundTruth {
    pub fn new(world: &WorldSpec, identity: Vec<DetectionTruth>, queries: Vec<QueryInstance>) -> Self {
        GroundTruth {
            seed: world.seed,
            identity,
            assignments: world
                .objects
                .iter()
                .map(|o| Assignment { object: o.id, floor: o.floor, room: o.room, group: o.group })
                .collect(),
            relations: world.relations.clone(),
            queries,
        }
    }
}

/// Writes `world.json` and `truth.json` into `dir`.
pub fn write_bundle(dir: &Path, world: &WorldSpec, truth: &GroundTruth) -> Result<(), SynthError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SynthError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, value) in [
        ("world.json", serde_json::to_string_pretty(world)),
        ("truth.json", serde_json::to_string_pretty(truth)),
    ] {
        let path = dir.join(name);
        let text = value.map_err(|e| SynthError::Infeasible(format!("serializing {name}: {e}")))?;
        std::fs::write(&path, text).map_err(io(&path))?;
    }
    Ok(())
}

/// A scene graph holding exactly the world's truth.
#[derive(Clone, Debug)]
pub struct TruthMap {
    pub graph: SceneGraph,
    pub store: KeyframeStore,
    /// World object id → graph id.
    pub object_ids: BTreeMap<u64, ObjectId>,
}

impl TruthMap {
    pub fn graph_ids(&self, world_ids: &[u64]) -> BTreeSet<ObjectId> {
        world_ids.iter().filter_map(|w| self.object_ids.get(w).copied()).collect()
    }
}

pub fn floor_id(index: u32) -> FloorId {
    FloorId(index as u64)
}

/// Builds the graph a perfect mapper would produce: true rooms and masks,
/// one area per placement group (when `areas` is set), every object with
/// its label, attributes and box, and the relation truth as edges. Each
/// room gets one keyframe that all its objects use as best view.
pub fn build_truth_graph(world: &WorldSpec, embedding_dim: usize, areas: bool) -> Result<TruthMap, GraphError> {
    let res = 0.05;
    let settings = GraphSettings { embedding_dim, grid_resolution_m: res, ..GraphSettings::default() };
    let mut g = SceneGraph::new(settings);
    let mut store = KeyframeStore::new();
    let embedder = HashEmbedder::new(embedding_dim);
    let (w, h) = (160u32, 120u32);
    let mut rooms = BTreeMap::new();
    let mut keyframes = BTreeMap::new();
    for f in &world.floors {
        let fid = floor_id(f.index);
        let zc = f.z_base + FLOOR_BAND_CENTRE_M;
        g.insert_floor(FloorNode {
            id: fid,
            index: f.index,
            z_min: zc - FLOOR_BAND_HALF_M,
            z_max: zc + FLOOR_BAND_HALF_M,
            z_ref: zc,
        })?;
        for r in &f.rooms {
            let rid = g.insert_room(fid, world.room_cells(r, res))?;
            let kf = KeyframeId(r.id as u64 + 1);
            let c = r.bounds.center();
            let img = Rgb::filled(w, h, room_color(r.id as u64 + 1)).to_png();
            store.insert(kf, Pose::looking(0.0, [c[0], c[1], zc], 0.0), w, h, img);
            g.set_room_semantics(rid, r.kind.clone(), String::new(), Some(kf))?;
            rooms.insert(r.id, rid);
            keyframes.insert(r.id, kf);
        }
    }
    let mut object_ids = BTreeMap::new();
    let mut groups: BTreeMap<usize, Vec<(ObjectId, String, usize)>> = BTreeMap::new();
    for (k, o) in world.objects.iter().enumerate() {
        // a small box on a 16 × 12 layout so crops stay inside the image
        let (bx, by) = ((k % 16) as u32 * 10, ((k / 16) % 12) as u32 * 10);
        let bbox2d = PixelRect { x0: bx, y0: by, x1: bx + 10, y1: by + 10 };
        let node = ObjectNode {
            id: ObjectId(0),
            label: o.label.clone(),
            is_open_vocab: !o.known_category,
            embedding: embedder.embed(&o.label).map_err(|e| GraphError::Invariant(e.to_string()))?,
            description: o.description(),
            centroid: o.center,
            bbox3d: Aabb::around(o.center, [o.size[0] / 2.0, o.size[1] / 2.0, o.size[2] / 2.0]),
            room_id: rooms.get(&o.room).copied(),
            area_id: None,
            floor_id: floor_id(o.floor),
            best_view: BestViewRef {
                keyframe_id: keyframes[&o.room],
                bbox2d,
                center_offset: bbox2d.center_offset(w, h),
            },
            observation_count: 1,
        };
        let id = g.insert_object(node)?;
        object_ids.insert(o.id, id);
        groups.entry(o.group).or_default().push((id, o.label.clone(), o.room));
    }
    if areas {
        for members in groups.values() {
            let labels: Vec<String> = members.iter().map(|m| m.1.clone()).collect();
            let room = rooms[&members[0].2];
            g.insert_area(
                room,
                stub_area_label(&labels),
                stub_area_summary(&labels),
                members.iter().map(|m| m.0).collect(),
            )?;
        }
    }
    for r in &world.relations {
        let (Some(a), Some(b)) = (object_ids.get(&r.src), object_ids.get(&r.dst)) else { continue };
        g.add_edge(
            SpatialEdge { src: *a, dst: *b, relation: r.relation, confidence: 1.0, source: EdgeSource::Geometric }
                .canonical(),
        )?;
    }
    Ok(TruthMap { graph: g, store, object_ids })
}

/// Stub verifier keyed to truth: accepts a candidate iff it is one of the
/// accepted ids registered for the request text.
#[derive(Clone, Debug, Default)]
pub struct OracleVerifier {
    accepted: BTreeMap<String, BTreeSet<ObjectId>>,
}

impl OracleVerifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn allow(&mut self, query: &str, ids: impl IntoIterator<Item = ObjectId>) {
        self.accepted.entry(query.to_string()).or_default().extend(ids);
    }

    /// Reply for one verifier request, or `None` when the request does not
    /// carry the expected `Request:` / `Candidate:` lines.
    pub fn reply(&self, req: &ChatRequest) -> Option<String> {
        let text = req.prompt_text();
        let query = text.lines().find_map(|l| l.strip_prefix("Request: "))?;
        let cand = text.lines().find_map(|l| l.strip_prefix("Candidate: "))?;
        let id: ObjectId = cand.split_whitespace().next()?.parse().ok()?;
        let ok = self.accepted.get(query.trim()).is_some_and(|s| s.contains(&id));
        let verdict = if ok { "accept" } else { "reject" };
        Some(format!("{{\"verdict\": \"{verdict}\", \"rationale\": \"truth lookup for {id}\"}}"))
    }

    pub fn into_responder(self) -> impl Fn(&ChatRequest) -> Option<String> + Send + Sync + 'static {
        let me = Arc::new(self);
        move |req| me.reply(req)
    }
}
