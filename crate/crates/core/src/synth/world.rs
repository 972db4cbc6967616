//! Rectilinear multi-floor worlds with placed, attributed objects.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use super::SynthError;
use crate::geometry::grid::OccupancyGrid;
use crate::geometry::mask::{cell_center, Cell, CellMask};
use crate::graph::Relation;
use crate::ids::FloorId;

/// Centre-to-centre horizontal distance below which two objects are near.
pub const NEAR_M: f64 = 1.0;
/// Minimum spacing between two objects sharing a label.
pub const SAME_LABEL_SPACING_M: f64 = 1.2;
/// Members of one functional group stay within this radius of its centre.
pub const GROUP_RADIUS_M: f64 = 0.7;
/// Minimum distance between the centres of two groups in one room.
pub const GROUP_SEPARATION_M: f64 = 3.8;

const SNAP: f64 = 20.0;

fn snap(x: f64) -> f64 {
    (x * SNAP).round() / SNAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub floors: usize,
    pub rooms_per_floor: usize,
    pub room_area_m2: f64,
    pub min_room_side_m: f64,
    pub door_width_m: [f64; 2],
    pub wall_thickness_m: f64,
    pub floor_height_m: f64,
    pub areas_per_room: [usize; 2],
    pub objects_per_area: [usize; 2],
    /// Chance that a support surface carries a small item.
    pub small_item_chance: f64,
    /// Chance of a door on a shared wall that is not needed for connectivity.
    pub extra_door_chance: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            floors: 1,
            rooms_per_floor: 3,
            room_area_m2: 30.0,
            min_room_side_m: 3.0,
            door_width_m: [0.7, 0.8],
            wall_thickness_m: 0.1,
            floor_height_m: 3.0,
            areas_per_room: [1, 2],
            objects_per_area: [3, 5],
            small_item_chance: 0.7,
            extra_door_chance: 0.25,
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Infeasible(m.to_string()));
        if !(1..=4).contains(&self.floors) {
            return bad("floors must be within 1..=4");
        }
        if !(1..=12).contains(&self.rooms_per_floor) {
            return bad("rooms_per_floor must be within 1..=12");
        }
        if self.door_width_m[0] <= 0.0 || self.door_width_m[0] > self.door_width_m[1] {
            return bad("door_width_m must be an increasing positive range");
        }
        if self.door_width_m[1] + 0.6 > self.min_room_side_m {
            return bad("doors do not fit on the shortest wall");
        }
        if self.room_area_m2 < self.min_room_side_m.powi(2) {
            return bad("room_area_m2 is smaller than a square of min_room_side_m");
        }
        if self.wall_thickness_m < 0.05 || self.wall_thickness_m > 0.5 {
            return bad("wall_thickness_m must be within [0.05, 0.5]");
        }
        if self.floor_height_m < 2.5 {
            return bad("floor_height_m must be at least 2.5");
        }
        if self.areas_per_room[0] == 0 || self.areas_per_room[0] > self.areas_per_room[1] {
            return bad("areas_per_room must be an increasing range starting at 1 or more");
        }
        if self.objects_per_area[0] == 0 || self.objects_per_area[0] > self.objects_per_area[1] {
            return bad("objects_per_area must be an increasing range starting at 1 or more");
        }
        Ok(())
    }
}

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0]
    }

    pub fn inset(&self, d: f64) -> Rect {
        Rect { x0: self.x0 + d, y0: self.y0 + d, x1: self.x1 - d, y1: self.y1 - d }
    }

    /// Strict interior test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.y0 && p[1] < self.y1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Unique across the whole world.
    pub id: usize,
    pub kind: String,
    /// Wall centre lines; the walkable interior is this inset by half a wall.
    pub bounds: Rect,
}

/// An opening in the wall between two rooms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoorSpec {
    pub rooms: (usize, usize),
    /// True when the wall runs along y (constant x).
    pub vertical: bool,
    /// Wall centre coordinate (x for vertical walls, y otherwise).
    pub at: f64,
    pub from: f64,
    pub to: f64,
}

impl DoorSpec {
    pub fn width(&self) -> f64 {
        self.to - self.from
    }

    pub fn center(&self) -> [f64; 2] {
        let m = (self.from + self.to) / 2.0;
        if self.vertical {
            [self.at, m]
        } else {
            [m, self.at]
        }
    }

    /// The walkable opening through the wall.
    pub fn opening(&self, wall: f64) -> Rect {
        let h = wall / 2.0;
        if self.vertical {
            Rect { x0: self.at - h, y0: self.from, x1: self.at + h, y1: self.to }
        } else {
            Rect { x0: self.from, y0: self.at - h, x1: self.to, y1: self.at + h }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloorSpec {
    /// 1-based, bottom floor first.
    pub index: u32,
    pub z_base: f64,
    pub rooms: Vec<RoomSpec>,
    pub doors: Vec<DoorSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub id: u64,
    pub label: String,
    pub known_category: bool,
    /// One color, then one material.
    pub attributes: Vec<String>,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub floor: u32,
    pub room: usize,
    /// Functional group, unique across the world.
    pub group: usize,
    /// Object this one stands on.
    pub support: Option<u64>,
}

impl PlacedObject {
    pub fn xy(&self) -> [f64; 2] {
        [self.center[0], self.center[1]]
    }

    pub fn description(&self) -> String {
        self.attributes.join(" ")
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.center[2] - self.size[2] / 2.0, self.center[2] + self.size[2] / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationTruth {
    pub src: u64,
    pub relation: Relation,
    pub dst: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    pub params: WorldParams,
    pub floors: Vec<FloorSpec>,
    pub objects: Vec<PlacedObject>,
    pub relations: Vec<RelationTruth>,
}

struct Item {
    label: &'static str,
    size: [f64; 3],
    support: bool,
    soft: bool,
}

const fn item(label: &'static str, size: [f64; 3], support: bool) -> Item {
    Item { label, size, support, soft: false }
}

const fn soft(label: &'static str, size: [f64; 3]) -> Item {
    Item { label, size, support: false, soft: true }
}

/// Room kinds with their characteristic furniture. Labels match the
/// offline room namer so that rooms are named after their kind.
const KINDS: &[(&str, &[Item])] = &[
    (
        "bedroom",
        &[soft("bed", [2.0, 1.6, 0.6]), item("nightstand", [0.5, 0.5, 0.6], true), item("wardrobe", [1.0, 0.6, 2.0], false), item("dresser", [1.0, 0.5, 0.9], true)],
    ),
    (
        "kitchen",
        &[item("stove", [0.6, 0.6, 0.9], false), item("fridge", [0.7, 0.7, 1.8], false), item("oven", [0.6, 0.6, 0.9], false), item("sink", [0.6, 0.5, 0.9], false)],
    ),
    (
        "living room",
        &[soft("sofa", [2.0, 0.9, 0.8]), soft("armchair", [0.8, 0.8, 0.9]), item("tv", [1.2, 0.3, 0.7], false)],
    ),
    (
        "bathroom",
        &[item("toilet", [0.4, 0.6, 0.8], false), item("bathtub", [1.7, 0.8, 0.6], false), item("shower", [0.9, 0.9, 2.0], false)],
    ),
    ("office", &[item("desk", [1.4, 0.7, 0.75], true)]),
    ("dining room", &[item("sideboard", [1.5, 0.5, 0.9], true)]),
];

const GENERIC: &[Item] = &[
    item("chair", [0.5, 0.5, 0.9], false),
    item("table", [0.9, 0.9, 0.75], true),
    item("cabinet", [0.8, 0.5, 1.0], true),
    item("shelf", [0.9, 0.35, 1.8], false),
    item("lamp", [0.35, 0.35, 1.5], false),
    item("plant", [0.4, 0.4, 0.8], false),
    item("basket", [0.4, 0.4, 0.3], false),
];

/// Small items and the room kinds that prefer them (empty: anywhere).
const SMALL: &[(&str, [f64; 3], &[&str], bool)] = &[
    ("mug", [0.1, 0.1, 0.12], &[], true),
    ("book", [0.25, 0.18, 0.05], &[], true),
    ("vase", [0.15, 0.15, 0.3], &[], true),
    ("bowl", [0.2, 0.2, 0.1], &["kitchen", "dining room"], true),
    ("bottle", [0.08, 0.08, 0.3], &[], true),
    ("kettle", [0.2, 0.2, 0.25], &["kitchen"], true),
    ("microwave", [0.5, 0.35, 0.3], &["kitchen"], true),
    ("remote", [0.18, 0.05, 0.03], &["living room"], true),
    ("monitor", [0.6, 0.2, 0.4], &["office"], true),
    ("printer", [0.45, 0.4, 0.25], &["office"], true),
    ("towel", [0.4, 0.3, 0.05], &["bathroom"], true),
    ("figurine", [0.08, 0.08, 0.15], &[], false),
    ("gadget", [0.12, 0.08, 0.05], &[], false),
];

const SOFT_SMALL: &[(&str, [f64; 3], bool)] = &[("pillow", [0.45, 0.35, 0.15], true), ("plushie", [0.25, 0.2, 0.25], false)];

pub const COLORS: &[&str] = &["red", "blue", "green", "yellow", "white", "black", "gray", "brown"];
pub const MATERIALS: &[&str] = &["wooden", "metal", "plastic", "glass", "leather", "fabric", "ceramic"];

pub fn room_kinds() -> impl Iterator<Item = &'static str> {
    KINDS.iter().map(|(k, _)| *k)
}

/// Binary space partition of a rectangle into `n` rooms.
fn partition(rng: &mut SplitMix64, p: &WorldParams) -> Result<Vec<Rect>, SynthError> {
    let total = p.room_area_m2 * p.rooms_per_floor as f64;
    let w = snap((total * 1.3).sqrt());
    let h = snap(total / w);
    let mut rects = vec![Rect { x0: 0.0, y0: 0.0, x1: w, y1: h }];
    let min = p.min_room_side_m;
    while rects.len() < p.rooms_per_floor {
        let splittable = rects
            .iter()
            .enumerate()
            .filter(|(_, r)| r.width().max(r.height()) >= 2.0 * min)
            .max_by(|a, b| a.1.area().total_cmp(&b.1.area()).then(b.0.cmp(&a.0)))
            .map(|(k, _)| k);
        let Some(k) = splittable else {
            return Err(SynthError::Infeasible(format!(
                "cannot fit {} rooms with sides of at least {min} m",
                p.rooms_per_floor
            )));
        };
        let r = rects.remove(k);
        let along_x = r.width() >= r.height();
        let (lo, len) = if along_x { (r.x0, r.width()) } else { (r.y0, r.height()) };
        let frac = rng.range_f64(0.35, 0.65);
        let cut = snap((lo + frac * len).clamp(lo + min, lo + len - min));
        let (a, b) = if along_x {
            (Rect { x1: cut, ..r }, Rect { x0: cut, ..r })
        } else {
            (Rect { y1: cut, ..r }, Rect { y0: cut, ..r })
        };
        rects.insert(k, b);
        rects.insert(k, a);
    }
    Ok(rects)
}

/// Shared wall segment between two rooms, if long enough for a door.
fn shared_wall(a: &Rect, b: &Rect, need: f64) -> Option<(bool, f64, f64, f64)> {
    let eq = |x: f64, y: f64| (x - y).abs() < 1e-6;
    let span = |a0: f64, a1: f64, b0: f64, b1: f64| {
        let (lo, hi) = (a0.max(b0), a1.min(b1));
        (hi - lo >= need).then_some((lo, hi))
    };
    if eq(a.x1, b.x0) || eq(b.x1, a.x0) {
        let at = if eq(a.x1, b.x0) { a.x1 } else { a.x0 };
        if let Some((lo, hi)) = span(a.y0, a.y1, b.y0, b.y1) {
            return Some((true, at, lo, hi));
        }
    }
    if eq(a.y1, b.y0) || eq(b.y1, a.y0) {
        let at = if eq(a.y1, b.y0) { a.y1 } else { a.y0 };
        if let Some((lo, hi)) = span(a.x0, a.x1, b.x0, b.x1) {
            return Some((false, at, lo, hi));
        }
    }
    None
}

fn place_doors(rng: &mut SplitMix64, rooms: &[RoomSpec], p: &WorldParams) -> Result<Vec<DoorSpec>, SynthError> {
    let margin = 0.3 + p.wall_thickness_m;
    let need = p.door_width_m[1] + 2.0 * margin;
    let mut walls = Vec::new();
    for i in 0..rooms.len() {
        for j in i + 1..rooms.len() {
            if let Some(w) = shared_wall(&rooms[i].bounds, &rooms[j].bounds, need) {
                walls.push((i, j, w));
            }
        }
    }
    let door = |rng: &mut SplitMix64, i: usize, j: usize, (vertical, at, lo, hi): (bool, f64, f64, f64)| {
        let width = snap(rng.range_f64(p.door_width_m[0], p.door_width_m[1]));
        let from = snap(rng.range_f64(lo + margin, hi - margin - width));
        DoorSpec { rooms: (rooms[i].id, rooms[j].id), vertical, at, from, to: snap(from + width) }
    };
    let mut connected = BTreeSet::from([0usize]);
    let mut used = BTreeSet::new();
    let mut doors = Vec::new();
    while connected.len() < rooms.len() {
        let frontier: Vec<usize> = (0..walls.len())
            .filter(|&k| connected.contains(&walls[k].0) != connected.contains(&walls[k].1))
            .collect();
        if frontier.is_empty() {
            return Err(SynthError::Infeasible("rooms cannot all be connected by doors".into()));
        }
        let k = *rng.pick(&frontier);
        let (i, j, w) = walls[k];
        doors.push(door(rng, i, j, w));
        connected.insert(i);
        connected.insert(j);
        used.insert(k);
    }
    for (k, &(i, j, w)) in walls.iter().enumerate() {
        if !used.contains(&k) && rng.chance(p.extra_door_chance) {
            doors.push(door(rng, i, j, w));
        }
    }
    Ok(doors)
}

struct Placer<'a> {
    rng: &'a mut SplitMix64,
    objects: Vec<PlacedObject>,
    next_id: &'a mut u64,
    group: &'a mut usize,
    floor: u32,
    z: f64,
    interior: Rect,
    doors: Vec<[f64; 2]>,
    small_chance: f64,
}

impl Placer<'_> {
    fn attributes(&mut self, soft_item: bool) -> Vec<String> {
        let color = self.rng.pick(COLORS).to_string();
        let m = if soft_item { *self.rng.pick(&["leather", "fabric"]) } else { *self.rng.pick(MATERIALS) };
        vec![color, m.to_string()]
    }

    fn same_label_clear(&self, label: &str, xy: [f64; 2]) -> bool {
        self.objects.iter().filter(|o| o.label == label).all(|o| dist(o.xy(), xy) >= SAME_LABEL_SPACING_M)
    }

    fn footprint_clear(&self, xy: [f64; 2], size: [f64; 3]) -> bool {
        let pad = 0.15;
        let half = [size[0] / 2.0, size[1] / 2.0];
        let r = self.interior.inset(0.05);
        if xy[0] - half[0] < r.x0 || xy[0] + half[0] > r.x1 || xy[1] - half[1] < r.y0 || xy[1] + half[1] > r.y1 {
            return false;
        }
        if self.doors.iter().any(|d| (d[0] - xy[0]).abs() < half[0] + 0.7 && (d[1] - xy[1]).abs() < half[1] + 0.7) {
            return false;
        }
        self.objects.iter().filter(|o| o.support.is_none()).all(|o| {
            (o.center[0] - xy[0]).abs() >= (o.size[0] + size[0]) / 2.0 + pad
                || (o.center[1] - xy[1]).abs() >= (o.size[1] + size[1]) / 2.0 + pad
        })
    }

    fn push(&mut self, label: &str, known: bool, attributes: Vec<String>, center: [f64; 3], size: [f64; 3], room: usize, support: Option<u64>) -> u64 {
        let id = *self.next_id;
        *self.next_id += 1;
        self.objects.push(PlacedObject {
            id,
            label: label.to_string(),
            known_category: known,
            attributes,
            center,
            size,
            floor: self.floor,
            room,
            group: *self.group,
            support,
        });
        id
    }

    /// One functional group of floor-standing items around `c`, with small
    /// items on top of supports.
    fn group(&mut self, room: &RoomSpec, c: [f64; 2], anchors: &[Item], n: usize, first: bool) {
        let mut placed = 0;
        for slot in 0..n {
            let it = if (first && slot == 0) || (!anchors.is_empty() && self.rng.chance(0.4)) {
                if anchors.is_empty() {
                    self.rng.pick(GENERIC)
                } else {
                    self.rng.pick(anchors)
                }
            } else {
                self.rng.pick(GENERIC)
            };
            let mut size = it.size;
            if self.rng.chance(0.5) {
                size.swap(0, 1);
            }
            let reach = GROUP_RADIUS_M;
            for _ in 0..80 {
                let a = self.rng.range_f64(0.0, std::f64::consts::TAU);
                let r = reach * self.rng.next_f64().sqrt();
                let xy = [snap(c[0] + r * a.cos()), snap(c[1] + r * a.sin())];
                if dist(xy, c) > reach || !self.footprint_clear(xy, size) || !self.same_label_clear(it.label, xy) {
                    continue;
                }
                let attrs = self.attributes(it.soft);
                let base = self.push(it.label, true, attrs, [xy[0], xy[1], self.z + size[2] / 2.0], size, room.id, None);
                placed += 1;
                if (it.support || it.soft) && self.rng.chance(self.small_chance) {
                    self.small_on(room, base, xy, size, it.soft);
                }
                break;
            }
        }
        if placed == 0 {
            log::debug!("group in room {} left empty", room.id);
        }
    }

    fn small_on(&mut self, room: &RoomSpec, base: u64, xy: [f64; 2], size: [f64; 3], soft_base: bool) {
        let (label, small, known) = if soft_base {
            let (l, s, k) = *self.rng.pick(SOFT_SMALL);
            (l, s, k)
        } else {
            let pool: Vec<&(&str, [f64; 3], &[&str], bool)> =
                SMALL.iter().filter(|(_, _, kinds, _)| kinds.is_empty() || kinds.contains(&room.kind.as_str())).collect();
            let (l, s, _, k) = **self.rng.pick(&pool);
            (l, s, k)
        };
        if !self.same_label_clear(label, xy) {
            return;
        }
        let top = self.z + size[2];
        let attrs = self.attributes(soft_base && label == "pillow");
        self.push(label, known, attrs, [xy[0], xy[1], top + small[2] / 2.0], small, room.id, Some(base));
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn group_centres(rng: &mut SplitMix64, interior: &Rect, want: usize) -> Vec<[f64; 2]> {
    let margin = (GROUP_RADIUS_M + 0.5).min(interior.width().min(interior.height()) / 2.0 - 0.05);
    let area = interior.inset(margin.max(0.0));
    let mut out: Vec<[f64; 2]> = Vec::new();
    for _ in 0..want {
        for _ in 0..100 {
            let p = [snap(rng.range_f64(area.x0, area.x1)), snap(rng.range_f64(area.y0, area.y1))];
            if out.iter().all(|q| dist(*q, p) >= GROUP_SEPARATION_M) {
                out.push(p);
                break;
            }
        }
    }
    if out.is_empty() {
        out.push(interior.center());
    }
    out
}

/// Relation truth from placement: support gives `on`, horizontal distance
/// gives `near`, and near pairs with enough vertical overlap are `next_to`.
pub fn relation_truth(objects: &[PlacedObject]) -> Vec<RelationTruth> {
    let mut out = BTreeSet::new();
    for o in objects {
        if let Some(s) = o.support {
            out.insert(RelationTruth { src: o.id, relation: Relation::On, dst: s });
        }
    }
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            if a.floor != b.floor || a.room != b.room || dist(a.xy(), b.xy()) >= NEAR_M {
                continue;
            }
            out.insert(RelationTruth { src: a.id, relation: Relation::Near, dst: b.id });
            let (a0, a1) = a.z_range();
            let (b0, b1) = b.z_range();
            let overlap = (a1.min(b1) - a0.max(b0)).max(0.0);
            let min_h = a.size[2].min(b.size[2]);
            if min_h > 0.0 && overlap / min_h >= 0.5 {
                out.insert(RelationTruth { src: a.id, relation: Relation::NextTo, dst: b.id });
            }
        }
    }
    out.into_iter().collect()
}

pub fn generate_world(seed: u64, params: &WorldParams) -> Result<WorldSpec, SynthError> {
    params.validate()?;
    let root = SplitMix64::new(seed);
    let mut floors = Vec::new();
    let mut objects = Vec::new();
    let mut next_id = 1u64;
    let mut next_room = 0usize;
    let mut group = 0usize;
    for f in 0..params.floors {
        let mut rng = root.fork(1000 + f as u64);
        let rects = partition(&mut rng, params)?;
        let mut kinds: Vec<&str> = room_kinds().collect();
        rng.shuffle(&mut kinds);
        let rooms: Vec<RoomSpec> = rects
            .into_iter()
            .enumerate()
            .map(|(k, bounds)| {
                let r = RoomSpec { id: next_room, kind: kinds[k % kinds.len()].to_string(), bounds };
                next_room += 1;
                r
            })
            .collect();
        let doors = place_doors(&mut rng, &rooms, params)?;
        let z = f as f64 * params.floor_height_m;
        let floor = f as u32 + 1;
        let mut orng = root.fork(2000 + f as u64);
        for room in &rooms {
            let interior = room.bounds.inset(params.wall_thickness_m / 2.0);
            let want = orng.range_usize(params.areas_per_room[0], params.areas_per_room[1]);
            let centres = group_centres(&mut orng, &interior, want);
            let anchors: &[Item] = KINDS.iter().find(|(k, _)| *k == room.kind).map(|(_, a)| *a).unwrap_or(&[]);
            let mut placer = Placer {
                rng: &mut orng,
                objects: std::mem::take(&mut objects),
                next_id: &mut next_id,
                group: &mut group,
                floor,
                z,
                interior,
                small_chance: params.small_item_chance,
                doors: doors.iter().filter(|d| d.rooms.0 == room.id || d.rooms.1 == room.id).map(|d| d.center()).collect(),
            };
            for (g, c) in centres.iter().enumerate() {
                let n = placer.rng.range_usize(params.objects_per_area[0], params.objects_per_area[1]);
                placer.group(room, *c, anchors, n, g == 0);
                *placer.group += 1;
            }
            objects = placer.objects;
        }
        floors.push(FloorSpec { index: floor, z_base: z, rooms, doors });
    }
    let relations = relation_truth(&objects);
    Ok(WorldSpec { seed, params: params.clone(), floors, objects, relations })
}

/// A large flat world for scoring tests: `floors` floors of 4×4 square
/// rooms with `n` objects drawn from the whole catalog. Rooms have no doors
/// and the grouping is by room quadrant, so it is only meant for graphs
/// built straight from truth.
pub fn random_world(seed: u64, n: usize, floors: u32) -> WorldSpec {
    const SIDE: f64 = 6.0;
    let params = WorldParams {
        floors: floors.max(1) as usize,
        rooms_per_floor: 16,
        room_area_m2: SIDE * SIDE,
        ..WorldParams::default()
    };
    let mut rng = SplitMix64::new(seed).fork(77);
    let mut out_floors = Vec::new();
    let mut kinds: Vec<&str> = room_kinds().collect();
    let mut next_room = 0;
    for f in 0..params.floors {
        let mut rooms = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                rng.shuffle(&mut kinds);
                let bounds = Rect { x0: i as f64 * SIDE, y0: j as f64 * SIDE, x1: (i + 1) as f64 * SIDE, y1: (j + 1) as f64 * SIDE };
                rooms.push(RoomSpec { id: next_room, kind: kinds[0].to_string(), bounds });
                next_room += 1;
            }
        }
        out_floors.push(FloorSpec { index: f as u32 + 1, z_base: f as f64 * params.floor_height_m, rooms, doors: Vec::new() });
    }
    let mut pool: Vec<(&str, [f64; 3], bool, bool)> = Vec::new();
    // (label, size, can hold items, known category)
    for (_, items) in KINDS {
        pool.extend(items.iter().map(|it| (it.label, it.size, it.support || it.soft, true)));
    }
    pool.extend(GENERIC.iter().map(|it| (it.label, it.size, it.support, true)));
    let small: Vec<(&str, [f64; 3], bool)> = SMALL
        .iter()
        .map(|(l, s, _, k)| (*l, *s, *k))
        .chain(SOFT_SMALL.iter().copied())
        .collect();
    let mut objects: Vec<PlacedObject> = Vec::with_capacity(n);
    let mut free_supports: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let all_rooms: Vec<(u32, f64, RoomSpec)> =
        out_floors.iter().flat_map(|f| f.rooms.iter().map(move |r| (f.index, f.z_base, r.clone()))).collect();
    for id in 1..=n as u64 {
        let (floor, z, room) = &all_rooms[rng.below(all_rooms.len())];
        let interior = room.bounds.inset(params.wall_thickness_m / 2.0 + 0.5);
        let supports = free_supports.entry(room.id).or_default();
        let color = rng.pick(COLORS).to_string();
        let material = rng.pick(MATERIALS).to_string();
        let (label, size, known, center, support) = if !supports.is_empty() && rng.chance(0.35) {
            let base = &objects[supports.swap_remove(rng.below(supports.len()))];
            let (l, s, k) = *rng.pick(&small);
            let top = base.center[2] + base.size[2] / 2.0;
            (l, s, k, [base.center[0], base.center[1], top + s[2] / 2.0], Some(base.id))
        } else {
            let (l, s, holds, k) = *rng.pick(&pool);
            if holds {
                supports.push(objects.len());
            }
            let xy = [snap(rng.range_f64(interior.x0, interior.x1)), snap(rng.range_f64(interior.y0, interior.y1))];
            (l, s, k, [xy[0], xy[1], z + s[2] / 2.0], None)
        };
        let c = room.bounds.center();
        let quadrant = (center[0] >= c[0]) as usize + 2 * (center[1] >= c[1]) as usize;
        objects.push(PlacedObject {
            id,
            label: label.to_string(),
            known_category: known,
            attributes: vec![color, material],
            center,
            size,
            floor: *floor,
            room: room.id,
            group: room.id * 4 + quadrant,
            support,
        });
    }
    let relations = relation_truth(&objects);
    WorldSpec { seed, params, floors: out_floors, objects, relations }
}

impl WorldSpec {
    pub fn floor(&self, index: u32) -> Option<&FloorSpec> {
        self.floors.iter().find(|f| f.index == index)
    }

    pub fn room(&self, id: usize) -> Option<&RoomSpec> {
        self.floors.iter().flat_map(|f| &f.rooms).find(|r| r.id == id)
    }

    pub fn object(&self, id: u64) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn interior(&self, room: &RoomSpec) -> Rect {
        room.bounds.inset(self.params.wall_thickness_m / 2.0)
    }

    pub fn floor_of_room(&self, id: usize) -> Option<&FloorSpec> {
        self.floors.iter().find(|f| f.rooms.iter().any(|r| r.id == id))
    }

    /// Room whose interior contains the point.
    pub fn room_at(&self, floor: u32, xy: [f64; 2]) -> Option<&RoomSpec> {
        self.floor(floor)?.rooms.iter().find(|r| self.interior(r).contains(xy))
    }

    /// Objects related to `id` by `rel`, reading symmetric relations both ways.
    pub fn related(&self, id: u64, rel: Relation) -> Vec<u64> {
        let mut out: Vec<u64> = self
            .relations
            .iter()
            .filter(|r| r.relation == rel)
            .filter_map(|r| {
                if r.src == id {
                    Some(r.dst)
                } else if r.dst == id && rel.is_symmetric() {
                    Some(r.src)
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Wall segments of one floor as `(a, b)` pairs, door openings removed
    /// and door jambs added.
    pub fn walls(&self, floor: u32) -> Vec<([f64; 2], [f64; 2])> {
        let Some(fl) = self.floor(floor) else { return Vec::new() };
        let t = self.params.wall_thickness_m;
        let mut segs = Vec::new();
        for room in &fl.rooms {
            let r = self.interior(room);
            let edges = [
                (false, r.y0, r.x0, r.x1, room.bounds.y0),
                (false, r.y1, r.x0, r.x1, room.bounds.y1),
                (true, r.x0, r.y0, r.y1, room.bounds.x0),
                (true, r.x1, r.y0, r.y1, room.bounds.x1),
            ];
            for (vertical, at, lo, hi, wall_at) in edges {
                let mut cuts: Vec<(f64, f64)> = fl
                    .doors
                    .iter()
                    .filter(|d| d.vertical == vertical && (d.at - wall_at).abs() < 1e-6)
                    .filter(|d| d.rooms.0 == room.id || d.rooms.1 == room.id)
                    .map(|d| (d.from, d.to))
                    .collect();
                cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut start = lo;
                for (c0, c1) in cuts.into_iter().chain(std::iter::once((hi, hi))) {
                    if c0 > start {
                        segs.push(if vertical { ([at, start], [at, c0]) } else { ([start, at], [c0, at]) });
                    }
                    start = start.max(c1);
                }
            }
        }
        for d in &fl.doors {
            let (a0, a1) = (d.at - t / 2.0, d.at + t / 2.0);
            for y in [d.from, d.to] {
                segs.push(if d.vertical { ([a0, y], [a1, y]) } else { ([y, a0], [y, a1]) });
            }
        }
        segs
    }

    /// Walkable cells of one room (cell centres strictly inside the interior).
    pub fn room_cells(&self, room: &RoomSpec, res: f64) -> CellMask {
        CellMask::from_cells(rect_cells(&self.interior(room), res))
    }

    /// Walkable cells of a floor: room interiors plus door openings.
    pub fn free_cells(&self, floor: u32, res: f64) -> BTreeSet<Cell> {
        let mut out = BTreeSet::new();
        if let Some(fl) = self.floor(floor) {
            for r in &fl.rooms {
                out.extend(rect_cells(&self.interior(r), res));
            }
            for d in &fl.doors {
                out.extend(rect_cells(&d.opening(self.params.wall_thickness_m), res));
            }
        }
        out
    }

    /// A fully observed occupancy grid of one floor: walkable cells free,
    /// everything else inside the outer wall occupied.
    pub fn truth_grid(&self, floor: u32, floor_id: FloorId, res: f64) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(floor_id, res);
        let free = self.free_cells(floor, res);
        let Some(fl) = self.floor(floor) else { return g };
        let x1 = fl.rooms.iter().map(|r| r.bounds.x1).fold(0.0, f64::max);
        let y1 = fl.rooms.iter().map(|r| r.bounds.y1).fold(0.0, f64::max);
        let outer = Rect { x0: -0.1, y0: -0.1, x1: x1 + 0.1, y1: y1 + 0.1 };
        for c in rect_cells(&outer, res) {
            if free.contains(&c) {
                g.mark_free(c);
            } else {
                g.mark_occupied(c);
            }
        }
        g
    }

    pub fn labels(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for o in &self.objects {
            *m.entry(o.label.clone()).or_insert(0) += 1;
        }
        m
    }
}

fn rect_cells(r: &Rect, res: f64) -> Vec<Cell> {
    let i0 = (r.x0 / res).floor() as i32 - 1;
    let i1 = (r.x1 / res).ceil() as i32 + 1;
    let j0 = (r.y0 / res).floor() as i32 - 1;
    let j1 = (r.y1 / res).ceil() as i32 + 1;
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            if r.contains(cell_center((i, j), res)) {
                out.push((i, j));
            }
        }
    }
    out
}
