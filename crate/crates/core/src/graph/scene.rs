use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::nodes::*;
use crate::geometry::mask::{cell_of, CellMask};
use crate::ids::{AreaId, FloorId, IdCounters, KeyframeId, ObjectId, RoomId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("unknown id {0}")]
    UnknownId(String),
    #[error("id {0} was retired and cannot be reused")]
    Retired(String),
    #[error("cannot merge {0} into itself")]
    SelfMerge(ObjectId),
}

fn invariant(msg: impl Into<String>) -> GraphError {
    GraphError::Invariant(msg.into())
}

/// Map-level constants fixed when a map is created.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSettings {
    pub embedding_dim: usize,
    pub grid_resolution_m: f64,
    pub created_at: u64,
    /// Labels treated as known categories during association. Empty means
    /// the detector's own flag decides.
    #[serde(default)]
    pub known_categories: Vec<String>,
}

impl Default for GraphSettings {
    fn default() -> Self {
        GraphSettings { embedding_dim: 384, grid_resolution_m: 0.05, created_at: 0, known_categories: Vec::new() }
    }
}

/// Fields of a survivor that association is allowed to rewrite on merge.
#[derive(Clone, Debug, PartialEq)]
pub struct MergedFields {
    pub centroid: [f64; 3],
    pub bbox3d: Aabb,
    pub embedding: Vec<f32>,
    pub description: String,
    pub best_view: BestViewRef,
}

/// The four-level scene graph plus object-object spatial edges.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SceneGraph {
    pub settings: GraphSettings,
    pub(crate) floors: BTreeMap<FloorId, FloorNode>,
    pub(crate) rooms: BTreeMap<RoomId, RoomNode>,
    pub(crate) areas: BTreeMap<AreaId, AreaNode>,
    pub(crate) objects: BTreeMap<ObjectId, ObjectNode>,
    pub(crate) edges: BTreeMap<(ObjectId, ObjectId, Relation), SpatialEdge>,
    pub(crate) revision: u64,
    pub(crate) updates: u64,
    pub(crate) ids: IdCounters,
    pub(crate) tombstones: BTreeSet<String>,
}

pub fn embedding_norm(e: &[f32]) -> f64 {
    e.iter().map(|v| *v as f64 * *v as f64).sum::<f64>().sqrt()
}

impl SceneGraph {
    pub fn new(settings: GraphSettings) -> Self {
        SceneGraph { settings, ..Default::default() }
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    /// Number of completed hierarchy updates. Not part of the revision.
    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn note_update(&mut self) {
        self.updates += 1;
    }

    pub fn floors(&self) -> impl Iterator<Item = &FloorNode> {
        self.floors.values()
    }
    pub fn rooms(&self) -> impl Iterator<Item = &RoomNode> {
        self.rooms.values()
    }
    pub fn areas(&self) -> impl Iterator<Item = &AreaNode> {
        self.areas.values()
    }
    pub fn objects(&self) -> impl Iterator<Item = &ObjectNode> {
        self.objects.values()
    }
    pub fn edges(&self) -> impl Iterator<Item = &SpatialEdge> {
        self.edges.values()
    }
    pub fn tombstones(&self) -> &BTreeSet<String> {
        &self.tombstones
    }
    pub fn id_counters(&self) -> &IdCounters {
        &self.ids
    }

    pub fn floor(&self, id: FloorId) -> Option<&FloorNode> {
        self.floors.get(&id)
    }
    pub fn room(&self, id: RoomId) -> Option<&RoomNode> {
        self.rooms.get(&id)
    }
    pub fn area(&self, id: AreaId) -> Option<&AreaNode> {
        self.areas.get(&id)
    }

    pub fn object(&self, id: ObjectId) -> Result<&ObjectNode, GraphError> {
        self.objects.get(&id).ok_or_else(|| GraphError::UnknownId(id.to_string()))
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn rooms_on(&self, floor: FloorId) -> impl Iterator<Item = &RoomNode> {
        self.rooms.values().filter(move |r| r.floor_id == floor)
    }

    pub fn objects_in_room(&self, room: RoomId) -> impl Iterator<Item = &ObjectNode> {
        self.objects.values().filter(move |o| o.room_id == Some(room))
    }

    pub fn edges_of(&self, id: ObjectId) -> impl Iterator<Item = &SpatialEdge> {
        self.edges.values().filter(move |e| e.touches(id))
    }

    /// Number of objects whose best view points at each keyframe.
    pub fn keyframe_refcounts(&self) -> BTreeMap<KeyframeId, usize> {
        let mut out = BTreeMap::new();
        for o in self.objects.values() {
            *out.entry(o.best_view.keyframe_id).or_insert(0) += 1;
        }
        for r in self.rooms.values() {
            if let Some(k) = r.best_view_keyframe {
                *out.entry(k).or_insert(0) += 1;
            }
        }
        out
    }

    // ---- floors ---------------------------------------------------------

    /// Inserts a floor with an id chosen by the floor tracker.
    pub fn insert_floor(&mut self, node: FloorNode) -> Result<FloorId, GraphError> {
        if !(node.z_min < node.z_max) {
            return Err(invariant(format!("floor {}: z_min < z_max", node.id)));
        }
        if self.tombstones.contains(&node.id.to_string()) {
            return Err(GraphError::Retired(node.id.to_string()));
        }
        for f in self.floors.values().filter(|f| f.id != node.id) {
            if node.z_min < f.z_max && f.z_min < node.z_max {
                return Err(invariant(format!("floor bands {} and {} overlap", node.id, f.id)));
            }
        }
        self.ids.floor = self.ids.floor.max(node.id.0 + 1);
        let id = node.id;
        self.floors.insert(id, node);
        self.bump();
        Ok(id)
    }

    // ---- rooms ----------------------------------------------------------

    pub fn insert_room(&mut self, floor_id: FloorId, mask: CellMask) -> Result<RoomId, GraphError> {
        if !self.floors.contains_key(&floor_id) {
            return Err(GraphError::UnknownId(floor_id.to_string()));
        }
        let id = self.ids.next_room();
        self.rooms.insert(
            id,
            RoomNode {
                id,
                floor_id,
                mask,
                label: String::new(),
                summary: String::new(),
                best_view_keyframe: None,
                area_ids: Vec::new(),
            },
        );
        self.bump();
        Ok(id)
    }

    pub fn set_room_mask(&mut self, id: RoomId, mask: CellMask) -> Result<(), GraphError> {
        let room = self.rooms.get_mut(&id).ok_or_else(|| GraphError::UnknownId(id.to_string()))?;
        if room.mask == mask {
            return Ok(());
        }
        room.mask = mask;
        self.bump();
        Ok(())
    }

    pub fn set_room_semantics(
        &mut self,
        id: RoomId,
        label: String,
        summary: String,
        best_view: Option<KeyframeId>,
    ) -> Result<(), GraphError> {
        let room = self.rooms.get_mut(&id).ok_or_else(|| GraphError::UnknownId(id.to_string()))?;
        if room.label == label && room.summary == summary && room.best_view_keyframe == best_view {
            return Ok(());
        }
        room.label = label;
        room.summary = summary;
        room.best_view_keyframe = best_view;
        self.bump();
        Ok(())
    }

    /// Removes a room, its areas, and unassigns its objects.
    pub fn remove_room(&mut self, id: RoomId) -> Result<(), GraphError> {
        let room = self.rooms.remove(&id).ok_or_else(|| GraphError::UnknownId(id.to_string()))?;
        for a in room.area_ids {
            if self.areas.remove(&a).is_some() {
                self.tombstones.insert(a.to_string());
            }
        }
        for o in self.objects.values_mut().filter(|o| o.room_id == Some(id)) {
            o.room_id = None;
            o.area_id = None;
        }
        self.tombstones.insert(id.to_string());
        self.bump();
        Ok(())
    }

    // ---- areas ----------------------------------------------------------

    /// Creates an area from objects that all sit in `room_id`.
    pub fn insert_area(
        &mut self,
        room_id: RoomId,
        label: String,
        summary: String,
        object_ids: Vec<ObjectId>,
    ) -> Result<AreaId, GraphError> {
        let id = self.ids.next_area();
        self.place_area(id, room_id, label, summary, object_ids)?;
        Ok(id)
    }

    /// Re-creates an area under an id it held before (identity kept across updates).
    pub fn restore_area(
        &mut self,
        id: AreaId,
        room_id: RoomId,
        label: String,
        summary: String,
        object_ids: Vec<ObjectId>,
    ) -> Result<AreaId, GraphError> {
        if id.0 >= self.ids.area {
            return Err(GraphError::UnknownId(id.to_string()));
        }
        if self.tombstones.contains(&id.to_string()) {
            return Err(GraphError::Retired(id.to_string()));
        }
        if let Some(old) = self.areas.get(&id) {
            let mut ids = object_ids.clone();
            ids.sort();
            if old.room_id == room_id && old.label == label && old.summary == summary && old.object_ids == ids {
                return Ok(id);
            }
            self.detach_area(id);
        }
        self.place_area(id, room_id, label, summary, object_ids)?;
        Ok(id)
    }

    fn place_area(
        &mut self,
        id: AreaId,
        room_id: RoomId,
        label: String,
        summary: String,
        object_ids: Vec<ObjectId>,
    ) -> Result<(), GraphError> {
        if !self.rooms.contains_key(&room_id) {
            return Err(GraphError::UnknownId(room_id.to_string()));
        }
        if object_ids.is_empty() {
            return Err(invariant(format!("area {id}: object_ids non-empty")));
        }
        let mut sum = [0.0, 0.0];
        for o in &object_ids {
            let obj = self.object(*o)?;
            if obj.room_id != Some(room_id) {
                return Err(invariant(format!("area {id}: object {o} has matching room_id")));
            }
            sum[0] += obj.centroid[0];
            sum[1] += obj.centroid[1];
        }
        let n = object_ids.len() as f64;
        let mut object_ids = object_ids;
        object_ids.sort();
        object_ids.dedup();
        for o in &object_ids {
            let prev = self.objects.get(o).and_then(|x| x.area_id);
            if let Some(p) = prev.filter(|p| *p != id) {
                if let Some(area) = self.areas.get_mut(&p) {
                    area.object_ids.retain(|x| x != o);
                }
            }
            self.objects.get_mut(o).expect("checked above").area_id = Some(id);
        }
        self.prune_empty_areas();
        self.areas.insert(id, AreaNode { id, room_id, label, summary, object_ids, centroid: [sum[0] / n, sum[1] / n] });
        let room = self.rooms.get_mut(&room_id).expect("checked above");
        if !room.area_ids.contains(&id) {
            room.area_ids.push(id);
            room.area_ids.sort();
        }
        self.bump();
        Ok(())
    }

    /// Removes an area without retiring its id.
    fn detach_area(&mut self, id: AreaId) {
        if let Some(area) = self.areas.remove(&id) {
            for o in &area.object_ids {
                if let Some(obj) = self.objects.get_mut(o) {
                    obj.area_id = None;
                }
            }
            if let Some(room) = self.rooms.get_mut(&area.room_id) {
                room.area_ids.retain(|a| *a != id);
            }
        }
    }

    pub fn remove_area(&mut self, id: AreaId) -> Result<(), GraphError> {
        if !self.areas.contains_key(&id) {
            return Err(GraphError::UnknownId(id.to_string()));
        }
        self.detach_area(id);
        self.tombstones.insert(id.to_string());
        self.bump();
        Ok(())
    }

    fn prune_empty_areas(&mut self) {
        let empty: Vec<AreaId> = self.areas.values().filter(|a| a.object_ids.is_empty()).map(|a| a.id).collect();
        for id in empty {
            self.detach_area(id);
            self.tombstones.insert(id.to_string());
        }
    }

    // ---- objects --------------------------------------------------------

    pub fn allocate_object_id(&mut self) -> ObjectId {
        self.ids.next_object()
    }

    fn check_object(&self, node: &ObjectNode) -> Result<(), GraphError> {
        let id = node.id;
        if node.embedding.len() != self.settings.embedding_dim {
            return Err(invariant(format!(
                "object {id}: embedding dimension {} equals map dimension {}",
                node.embedding.len(),
                self.settings.embedding_dim
            )));
        }
        let norm = embedding_norm(&node.embedding);
        if (norm - 1.0).abs() > 1e-6 {
            return Err(invariant(format!("object {id}: |embedding| = 1 ± 1e-6 (got {norm:.6})")));
        }
        if !node.bbox3d.is_valid() || !node.bbox3d.contains(node.centroid) {
            return Err(invariant(format!("object {id}: bbox3d contains centroid")));
        }
        if node.observation_count < 1 {
            return Err(invariant(format!("object {id}: observation_count >= 1")));
        }
        if !self.floors.contains_key(&node.floor_id) {
            return Err(invariant(format!("object {id}: floor_id {} exists", node.floor_id)));
        }
        if let Some(r) = node.room_id {
            if !self.rooms.contains_key(&r) {
                return Err(invariant(format!("object {id}: room_id {r} exists")));
            }
        }
        if let Some(a) = node.area_id {
            match self.areas.get(&a) {
                Some(area) if Some(area.room_id) == node.room_id => {}
                _ => return Err(invariant(format!("object {id}: area {a} lies in the object's room"))),
            }
        }
        if !(node.best_view.bbox2d.x0 < node.best_view.bbox2d.x1 && node.best_view.bbox2d.y0 < node.best_view.bbox2d.y1)
        {
            return Err(invariant(format!("object {id}: best-view bbox2d is non-empty")));
        }
        Ok(())
    }

    /// Inserts or replaces an object by id. The id must have been allocated
    /// by this graph and not retired.
    pub fn upsert_object(&mut self, node: ObjectNode) -> Result<ObjectId, GraphError> {
        let id = node.id;
        if self.tombstones.contains(&id.to_string()) {
            return Err(GraphError::Retired(id.to_string()));
        }
        if id.0 == 0 || id.0 >= self.ids.object {
            return Err(invariant(format!("object {id}: id allocated by this map")));
        }
        self.check_object(&node)?;
        let prev_area = self.objects.get(&id).and_then(|o| o.area_id);
        if prev_area != node.area_id {
            if let Some(p) = prev_area.and_then(|p| self.areas.get_mut(&p)) {
                p.object_ids.retain(|x| *x != id);
            }
            if let Some(a) = node.area_id.and_then(|a| self.areas.get_mut(&a)) {
                a.object_ids.push(id);
                a.object_ids.sort();
            }
        }
        self.objects.insert(id, node);
        self.prune_empty_areas();
        self.bump();
        Ok(id)
    }

    /// Allocates an id for `node` and inserts it.
    pub fn insert_object(&mut self, mut node: ObjectNode) -> Result<ObjectId, GraphError> {
        let probe = ObjectId(self.ids.object);
        node.id = probe;
        self.check_object(&node)?;
        node.id = self.allocate_object_id();
        self.upsert_object(node)
    }

    pub fn merge_objects(
        &mut self,
        survivor: ObjectId,
        victim: ObjectId,
        merged: MergedFields,
    ) -> Result<ObjectNode, GraphError> {
        if survivor == victim {
            return Err(GraphError::SelfMerge(survivor));
        }
        let victim_node = self.object(victim)?.clone();
        let mut node = self.object(survivor)?.clone();
        node.centroid = merged.centroid;
        node.bbox3d = merged.bbox3d;
        node.embedding = merged.embedding;
        node.description = merged.description;
        node.best_view = merged.best_view;
        node.observation_count += victim_node.observation_count;
        self.check_object(&node)?;

        self.objects.remove(&victim);
        if let Some(area) = victim_node.area_id.and_then(|a| self.areas.get_mut(&a)) {
            area.object_ids.retain(|x| *x != victim);
        }
        let touching: Vec<_> = self.edges.values().filter(|e| e.touches(victim)).cloned().collect();
        for e in touching {
            self.edges.remove(&e.key());
            let mut e2 = e.clone();
            if e2.src == victim {
                e2.src = survivor;
            }
            if e2.dst == victim {
                e2.dst = survivor;
            }
            if e2.src != e2.dst {
                self.put_edge(e2.canonical());
            }
        }
        self.objects.insert(survivor, node.clone());
        self.tombstones.insert(victim.to_string());
        self.prune_empty_areas();
        self.bump();
        Ok(node)
    }

    pub fn remove_object(&mut self, id: ObjectId) -> Result<(), GraphError> {
        let node = self.objects.remove(&id).ok_or_else(|| GraphError::UnknownId(id.to_string()))?;
        if let Some(area) = node.area_id.and_then(|a| self.areas.get_mut(&a)) {
            area.object_ids.retain(|x| *x != id);
        }
        self.edges.retain(|_, e| !e.touches(id));
        self.tombstones.insert(id.to_string());
        self.prune_empty_areas();
        self.bump();
        Ok(())
    }

    /// Sets every object's room from the current room masks. Objects whose
    /// room changed leave their area. Returns how many assignments changed.
    pub fn reassign_objects_to_rooms(&mut self) -> usize {
        let res = self.settings.grid_resolution_m;
        let mut changed = Vec::new();
        for o in self.objects.values() {
            let cell = cell_of(o.centroid[0], o.centroid[1], res);
            let room = self.rooms.values().find(|r| r.floor_id == o.floor_id && r.mask.contains(cell)).map(|r| r.id);
            if room != o.room_id {
                changed.push((o.id, room));
            }
        }
        for (id, room) in &changed {
            let o = self.objects.get_mut(id).expect("object listed above");
            o.room_id = *room;
            if let Some(a) = o.area_id.take() {
                if let Some(area) = self.areas.get_mut(&a) {
                    area.object_ids.retain(|x| x != id);
                }
            }
        }
        self.prune_empty_areas();
        if !changed.is_empty() {
            self.bump();
        }
        changed.len()
    }

    // ---- edges ----------------------------------------------------------

    fn put_edge(&mut self, e: SpatialEdge) {
        match self.edges.get(&e.key()) {
            Some(old) if old.confidence >= e.confidence => {}
            _ => {
                self.edges.insert(e.key(), e);
            }
        }
    }

    /// Adds an edge, keeping the more confident one if the triple exists.
    pub fn add_edge(&mut self, edge: SpatialEdge) -> Result<(), GraphError> {
        if edge.src == edge.dst {
            return Err(invariant(format!("edge {} {}: src != dst", edge.src, edge.relation)));
        }
        if !(0.0..=1.0).contains(&edge.confidence) {
            return Err(invariant("edge confidence in [0, 1]"));
        }
        self.object(edge.src)?;
        self.object(edge.dst)?;
        self.put_edge(edge.canonical());
        self.bump();
        Ok(())
    }

    /// Drops every edge touching `id` (used before recomputing its topology).
    pub fn clear_edges_of(&mut self, id: ObjectId) {
        let before = self.edges.len();
        self.edges.retain(|_, e| !e.touches(id));
        if self.edges.len() != before {
            self.bump();
        }
    }

    /// Drops every edge between two objects, in either direction.
    pub fn remove_edges_between(&mut self, a: ObjectId, b: ObjectId) {
        let before = self.edges.len();
        self.edges.retain(|_, e| !(e.touches(a) && e.touches(b)));
        if self.edges.len() != before {
            self.bump();
        }
    }

    // ---- checks ---------------------------------------------------------

    /// Full referential-integrity check; returns human-readable violations.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        for f in self.floors.values() {
            if !(f.z_min < f.z_max) {
                out.push(format!("floor {}: z_min < z_max", f.id));
            }
            for g in self.floors.values().filter(|g| g.id > f.id) {
                if f.z_min < g.z_max && g.z_min < f.z_max {
                    out.push(format!("floors {} and {} overlap", f.id, g.id));
                }
            }
        }
        for r in self.rooms.values() {
            if !self.floors.contains_key(&r.floor_id) {
                out.push(format!("room {}: floor {} missing", r.id, r.floor_id));
            }
            for a in &r.area_ids {
                if self.areas.get(a).map(|x| x.room_id) != Some(r.id) {
                    out.push(format!("room {}: area {a} missing or elsewhere", r.id));
                }
            }
            for s in self.rooms.values().filter(|s| s.id > r.id && s.floor_id == r.floor_id) {
                if r.mask.intersection_count(&s.mask) > 0 {
                    out.push(format!("rooms {} and {} overlap", r.id, s.id));
                }
            }
        }
        for a in self.areas.values() {
            if !self.rooms.contains_key(&a.room_id) {
                out.push(format!("area {}: room {} missing", a.id, a.room_id));
            }
            if a.object_ids.is_empty() {
                out.push(format!("area {}: no objects", a.id));
            }
            for o in &a.object_ids {
                match self.objects.get(o) {
                    Some(obj) if obj.room_id == Some(a.room_id) && obj.area_id == Some(a.id) => {}
                    _ => out.push(format!("area {}: object {o} inconsistent", a.id)),
                }
            }
        }
        for o in self.objects.values() {
            if let Err(e) = self.check_object(o) {
                out.push(e.to_string());
            }
            if let Some(a) = o.area_id {
                if !self.areas.get(&a).is_some_and(|x| x.object_ids.contains(&o.id)) {
                    out.push(format!("object {}: area {a} does not list it", o.id));
                }
            }
        }
        for e in self.edges.values() {
            if e.src == e.dst {
                out.push(format!("edge on {}: self loop", e.src));
            }
            if !self.objects.contains_key(&e.src) || !self.objects.contains_key(&e.dst) {
                out.push(format!("edge {} {} {}: dangling", e.src, e.relation, e.dst));
            }
        }
        let live: Vec<String> = self
            .floors
            .keys()
            .map(|i| i.to_string())
            .chain(self.rooms.keys().map(|i| i.to_string()))
            .chain(self.areas.keys().map(|i| i.to_string()))
            .chain(self.objects.keys().map(|i| i.to_string()))
            .collect();
        for id in live {
            if self.tombstones.contains(&id) {
                out.push(format!("{id} is live but retired"));
            }
        }
        out
    }

    pub(crate) fn from_parts(parts: GraphParts) -> Self {
        SceneGraph {
            settings: parts.settings,
            floors: parts.floors.into_iter().map(|f| (f.id, f)).collect(),
            rooms: parts.rooms.into_iter().map(|r| (r.id, r)).collect(),
            areas: parts.areas.into_iter().map(|a| (a.id, a)).collect(),
            objects: parts.objects.into_iter().map(|o| (o.id, o)).collect(),
            edges: parts.edges.into_iter().map(|e| (e.key(), e)).collect(),
            revision: parts.revision,
            updates: parts.updates,
            ids: parts.ids,
            tombstones: parts.tombstones.into_iter().collect(),
        }
    }
}

pub(crate) struct GraphParts {
    pub settings: GraphSettings,
    pub floors: Vec<FloorNode>,
    pub rooms: Vec<RoomNode>,
    pub areas: Vec<AreaNode>,
    pub objects: Vec<ObjectNode>,
    pub edges: Vec<SpatialEdge>,
    pub revision: u64,
    pub updates: u64,
    pub ids: IdCounters,
    pub tombstones: Vec<String>,
}
