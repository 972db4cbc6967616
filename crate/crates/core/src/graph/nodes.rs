use serde::{Deserialize, Serialize};

use crate::geometry::mask::CellMask;
use crate::ids::{room_ref, AreaId, FloorId, KeyframeId, ObjectId, RoomId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorNode {
    pub id: FloorId,
    /// Order of discovery, starting at 1.
    pub index: u32,
    pub z_min: f64,
    pub z_max: f64,
    /// Camera height the band was centred on when the floor was created.
    pub z_ref: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomNode {
    pub id: RoomId,
    pub floor_id: FloorId,
    /// Persisted separately under `masks/`.
    #[serde(skip)]
    pub mask: CellMask,
    pub label: String,
    pub summary: String,
    pub best_view_keyframe: Option<KeyframeId>,
    pub area_ids: Vec<AreaId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaNode {
    pub id: AreaId,
    pub room_id: RoomId,
    pub label: String,
    pub summary: String,
    pub object_ids: Vec<ObjectId>,
    pub centroid: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn around(center: [f64; 3], half: [f64; 3]) -> Self {
        Aabb {
            min: [center[0] - half[0], center[1] - half[1], center[2] - half[2]],
            max: [center[0] + half[0], center[1] + half[1], center[2] + half[2]],
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|k| self.min[k].is_finite() && self.max[k].is_finite() && self.min[k] <= self.max[k])
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - 1e-9 && p[k] <= self.max[k] + 1e-9)
    }

    pub fn center(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| 0.5 * (self.min[k] + self.max[k]))
    }

    pub fn extent(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.max[k] - self.min[k])
    }

    pub fn volume(&self) -> f64 {
        self.extent().iter().product()
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: [0, 1, 2].map(|k| self.min[k].min(o.min[k])),
            max: [0, 1, 2].map(|k| self.max[k].max(o.max[k])),
        }
    }

    fn overlap_1d(&self, o: &Aabb, k: usize) -> f64 {
        (self.max[k].min(o.max[k]) - self.min[k].max(o.min[k])).max(0.0)
    }

    pub fn intersection_volume(&self, o: &Aabb) -> f64 {
        (0..3).map(|k| self.overlap_1d(o, k)).product()
    }

    pub fn iou(&self, o: &Aabb) -> f64 {
        let inter = self.intersection_volume(o);
        let union = self.volume() + o.volume() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn footprint_area(&self) -> f64 {
        self.extent()[0] * self.extent()[1]
    }

    pub fn footprint_overlap(&self, o: &Aabb) -> f64 {
        self.overlap_1d(o, 0) * self.overlap_1d(o, 1)
    }

    pub fn vertical_overlap(&self, o: &Aabb) -> f64 {
        self.overlap_1d(o, 2)
    }
}

/// Pixel rectangle, half-open: `[x0, x1) × [y0, y1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn is_valid_within(&self, width: u32, height: u32) -> bool {
        self.x0 < self.x1 && self.y0 < self.y1 && self.x1 <= width && self.y1 <= height
    }

    pub fn center(&self) -> [f64; 2] {
        [0.5 * (self.x0 + self.x1) as f64, 0.5 * (self.y0 + self.y1) as f64]
    }

    pub fn area(&self) -> u64 {
        (self.x1.saturating_sub(self.x0)) as u64 * (self.y1.saturating_sub(self.y0)) as u64
    }

    /// Distance of the rectangle centre from the image centre, in units of the
    /// image half-size per axis; ranges over `[0, √2]`.
    pub fn center_offset(&self, width: u32, height: u32) -> f64 {
        let c = self.center();
        let dx = (c[0] - width as f64 / 2.0) / (width as f64 / 2.0);
        let dy = (c[1] - height as f64 / 2.0) / (height as f64 / 2.0);
        (dx * dx + dy * dy).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestViewRef {
    pub keyframe_id: KeyframeId,
    pub bbox2d: PixelRect,
    pub center_offset: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectNode {
    pub id: ObjectId,
    pub label: String,
    pub is_open_vocab: bool,
    pub embedding: Vec<f32>,
    pub description: String,
    pub centroid: [f64; 3],
    pub bbox3d: Aabb,
    #[serde(with = "room_ref")]
    pub room_id: Option<RoomId>,
    pub area_id: Option<AreaId>,
    pub floor_id: FloorId,
    pub best_view: BestViewRef,
    pub observation_count: u32,
}

impl ObjectNode {
    pub fn xy(&self) -> [f64; 2] {
        [self.centroid[0], self.centroid[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    On,
    In,
    Near,
    NextTo,
    Above,
    Below,
}

impl Relation {
    pub const ALL: [Relation; 6] =
        [Relation::On, Relation::In, Relation::Near, Relation::NextTo, Relation::Above, Relation::Below];

    pub fn is_symmetric(self) -> bool {
        matches!(self, Relation::Near | Relation::NextTo)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::On => "on",
            Relation::In => "in",
            Relation::Near => "near",
            Relation::NextTo => "next_to",
            Relation::Above => "above",
            Relation::Below => "below",
        }
    }

    pub fn parse(s: &str) -> Option<Relation> {
        let s = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Relation::ALL.into_iter().find(|r| r.as_str() == s)
    }
}

impl std::fmt::Display for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSource {
    Geometric,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialEdge {
    pub src: ObjectId,
    pub dst: ObjectId,
    pub relation: Relation,
    pub confidence: f64,
    pub source: EdgeSource,
}

impl SpatialEdge {
    /// Symmetric relations are stored with the lower id as `src`.
    pub fn canonical(mut self) -> Self {
        if self.relation.is_symmetric() && self.dst < self.src {
            std::mem::swap(&mut self.src, &mut self.dst);
        }
        self
    }

    pub fn key(&self) -> (ObjectId, ObjectId, Relation) {
        (self.src, self.dst, self.relation)
    }

    pub fn touches(&self, id: ObjectId) -> bool {
        self.src == id || self.dst == id
    }

    pub fn other(&self, id: ObjectId) -> Option<ObjectId> {
        if self.src == id {
            Some(self.dst)
        } else if self.dst == id {
            Some(self.src)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_identical_boxes() {
        let b = Aabb::around([0.0, 0.0, 0.5], [0.5, 0.5, 0.5]);
        assert!((b.iou(&b) - 1.0).abs() < 1e-12);
        let shifted = Aabb::around([1.0, 0.0, 0.5], [0.5, 0.5, 0.5]);
        assert_eq!(b.iou(&shifted), 0.0);
    }

    #[test]
    fn center_offset_range() {
        let r = PixelRect { x0: 0, y0: 0, x1: 2, y1: 2 };
        let off = r.center_offset(640, 480);
        assert!(off > 1.3 && off <= 2f64.sqrt());
        let mid = PixelRect { x0: 310, y0: 230, x1: 330, y1: 250 };
        assert!(mid.center_offset(640, 480) < 1e-12);
    }

    #[test]
    fn symmetric_edges_canonicalize() {
        let e = SpatialEdge { src: ObjectId(5), dst: ObjectId(2), relation: Relation::Near, confidence: 1.0, source: EdgeSource::Geometric };
        assert_eq!(e.canonical().src, ObjectId(2));
        let d = SpatialEdge { src: ObjectId(5), dst: ObjectId(2), relation: Relation::On, confidence: 1.0, source: EdgeSource::Geometric };
        assert_eq!(d.canonical().src, ObjectId(5));
    }

    #[test]
    fn relation_names() {
        assert_eq!(Relation::parse("next to"), Some(Relation::NextTo));
        assert_eq!(serde_json::to_string(&Relation::NextTo).unwrap(), "\"next_to\"");
    }
}
