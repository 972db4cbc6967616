use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::geometry::mask::{Cell, CellMask};
use crate::geometry::pose::Pose;
use crate::ids::FloorId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TriggerConfig {
    pub loop_radius_m: f64,
    pub loop_path_len_m: f64,
    pub n_obj_trigger: usize,
    pub fade_horizon_s: f64,
    /// A region counts as already summarized when this share of the smaller
    /// of the two masks overlaps a summarized mask.
    pub known_overlap: f64,
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            loop_radius_m: 2.0,
            loop_path_len_m: 15.0,
            n_obj_trigger: 25,
            fade_horizon_s: 120.0,
            known_overlap: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerReason {
    FloorChange,
    NewArea,
    LoopClosure,
    ObjectChanges,
    /// End of sequence; every floor gets a final pass.
    Final,
}

impl TriggerReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TriggerReason::FloorChange => "floor change",
            TriggerReason::NewArea => "new area",
            TriggerReason::LoopClosure => "loop closure",
            TriggerReason::ObjectChanges => "object changes",
            TriggerReason::Final => "final",
        }
    }
}

/// A pose where the hierarchy was last rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdatePoint {
    pub floor_id: FloorId,
    pub pose: Pose,
    pub timestamp: f64,
    /// Path length travelled since this point was recorded.
    pub travel_m: f64,
    /// Whether the robot has been farther than the loop radius from it.
    pub left: bool,
    /// Cleared once the point has produced a loop closure.
    pub armed: bool,
}

/// Everything the soft and hard triggers look at.
#[derive(Clone, Debug, Default)]
pub struct TriggerState {
    pub cfg: TriggerConfig,
    pub current_floor: Option<FloorId>,
    floor_changed: bool,
    pub update_points: Vec<UpdatePoint>,
    pub trajectory: BTreeMap<FloorId, Vec<[f64; 2]>>,
    summarized: BTreeMap<FloorId, Vec<CellMask>>,
    /// Indices into the floor's summarized masks visited since the last update.
    pub rooms_visited_since_update: BTreeSet<usize>,
    pub objects_changed_since_update: usize,
    last_xy: Option<[f64; 2]>,
    pub now: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

impl TriggerState {
    pub fn new(cfg: TriggerConfig) -> Self {
        TriggerState { cfg, ..Default::default() }
    }

    /// Records the floor of the latest frame. Any change is latched until
    /// the next [`check_hard_trigger`](Self::check_hard_trigger).
    pub fn note_floor(&mut self, floor: FloorId) {
        if self.current_floor.is_some_and(|f| f != floor) {
            self.floor_changed = true;
            self.last_xy = None;
        }
        self.current_floor = Some(floor);
    }

    /// True iff the floor changed since the previous call.
    pub fn check_hard_trigger(&mut self) -> bool {
        std::mem::take(&mut self.floor_changed)
    }

    /// Extends the trajectory and the travel counters of update points on
    /// this floor.
    pub fn note_motion(&mut self, floor: FloorId, pose: &Pose) {
        let xy = pose.xy();
        self.now = self.now.max(pose.timestamp);
        let step = self.last_xy.map(|p| dist(p, xy)).unwrap_or(0.0);
        self.last_xy = Some(xy);
        self.trajectory.entry(floor).or_default().push(xy);
        let r = self.cfg.loop_radius_m;
        for p in self.update_points.iter_mut().filter(|p| p.floor_id == floor) {
            p.travel_m += step;
            if dist(p.pose.xy(), xy) > r {
                p.left = true;
            }
        }
    }

    pub fn note_objects_changed(&mut self, n: usize) {
        self.objects_changed_since_update += n;
    }

    /// Rule (c): enough object changes accumulated since the last update.
    pub fn object_rule(&self) -> bool {
        self.objects_changed_since_update >= self.cfg.n_obj_trigger
    }

    fn region_known(&self, floor: FloorId, region: &CellMask) -> Option<usize> {
        let masks = self.summarized.get(&floor)?;
        masks.iter().position(|m| {
            let small = m.count().min(region.count());
            small > 0 && m.intersection_count(region) as f64 >= self.cfg.known_overlap * small as f64
        })
    }

    /// Rules (a) and (b). `region` is the segmented region holding the
    /// camera, if segmentation has produced one. Loop closures disarm the
    /// points they fire on.
    pub fn rules_check(&mut self, floor: FloorId, xy: [f64; 2], region: Option<&CellMask>) -> Option<TriggerReason> {
        if let Some(region) = region {
            match self.region_known(floor, region) {
                Some(k) => {
                    self.rooms_visited_since_update.insert(k);
                }
                None => return Some(TriggerReason::NewArea),
            }
        }
        let (r, len) = (self.cfg.loop_radius_m, self.cfg.loop_path_len_m);
        let mut fired = false;
        for p in self.update_points.iter_mut().filter(|p| p.floor_id == floor && p.armed) {
            if p.left && p.travel_m >= len && dist(p.pose.xy(), xy) <= r {
                p.armed = false;
                fired = true;
            }
        }
        if fired {
            return Some(TriggerReason::LoopClosure);
        }
        if self.object_rule() {
            return Some(TriggerReason::ObjectChanges);
        }
        None
    }

    /// Resets the counters after an update on `floor` and remembers the
    /// masks it summarized.
    pub fn record_update(&mut self, floor: FloorId, pose: Option<&Pose>, masks: Vec<CellMask>) {
        if let Some(pose) = pose {
            self.now = self.now.max(pose.timestamp);
            self.update_points.push(UpdatePoint {
                floor_id: floor,
                pose: *pose,
                timestamp: pose.timestamp,
                travel_m: 0.0,
                left: false,
                armed: true,
            });
        }
        self.summarized.insert(floor, masks);
        self.rooms_visited_since_update.clear();
        self.objects_changed_since_update = 0;
    }

    pub fn summarized(&self, floor: FloorId) -> &[CellMask] {
        self.summarized.get(&floor).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Fade weight of an update point: 1 when fresh, 0 past the horizon.
    /// Non-increasing in `now`.
    pub fn age_weight(&self, p: &UpdatePoint) -> f64 {
        let age = (self.now - p.timestamp).max(0.0);
        (1.0 - age / self.cfg.fade_horizon_s).max(0.0)
    }
}

/// Region of `masks` containing `cell`, if any.
pub fn region_at(masks: &[CellMask], cell: Cell) -> Option<&CellMask> {
    masks.iter().find(|m| m.contains(cell))
}
