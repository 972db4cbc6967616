use std::collections::BTreeSet;

use crate::geometry::grid::{Occupancy, OccupancyGrid};
use crate::geometry::mask::{Cell, CellMask};
use crate::geometry::pose::Pose;
use crate::ids::KeyframeId;

/// Ray-casting parameters for room best views.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ViewCone {
    /// Full horizontal field of view in radians.
    pub hfov: f64,
    pub max_range_m: f64,
    /// Angular spacing between rays in radians.
    pub ray_step: f64,
}

impl Default for ViewCone {
    fn default() -> Self {
        ViewCone { hfov: 90f64.to_radians(), max_range_m: 8.0, ray_step: 0.5f64.to_radians() }
    }
}

/// Cells seen from `pose`: rays fan across the field of view, march in
/// half-cell steps and stop at the first occupied cell (which is not
/// counted).
pub fn visible_cells(grid: &OccupancyGrid, pose: &Pose, cone: &ViewCone) -> BTreeSet<Cell> {
    let mut seen = BTreeSet::new();
    let res = grid.resolution;
    let [x0, y0] = pose.xy();
    let yaw = pose.yaw();
    let n = (cone.hfov / cone.ray_step).ceil().max(1.0) as usize;
    let step = res * 0.5;
    let n_steps = (cone.max_range_m / step).ceil() as usize;
    for k in 0..=n {
        let a = yaw - cone.hfov / 2.0 + cone.hfov * k as f64 / n as f64;
        let (dx, dy) = (a.cos(), a.sin());
        for s in 0..=n_steps {
            let t = s as f64 * step;
            let c = grid.cell_of(x0 + dx * t, y0 + dy * t);
            if grid.get(c) == Occupancy::Occupied {
                break;
            }
            seen.insert(c);
        }
    }
    seen
}

pub fn view_score(grid: &OccupancyGrid, pose: &Pose, cone: &ViewCone, room: &CellMask) -> usize {
    visible_cells(grid, pose, cone).into_iter().filter(|c| room.contains(*c)).count()
}

/// Keyframe whose view covers the most room cells; ties go to the earliest
/// id. `None` when no candidate sees any of the room.
pub fn select_room_best_view(
    room: &CellMask,
    candidates: &[(KeyframeId, Pose)],
    grid: &OccupancyGrid,
    cone: &ViewCone,
) -> Option<KeyframeId> {
    let mut sorted: Vec<&(KeyframeId, Pose)> = candidates.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    let mut best: Option<(usize, KeyframeId)> = None;
    for (k, pose) in sorted {
        let s = view_score(grid, pose, cone, room);
        if s > 0 && best.is_none_or(|(b, _)| s > b) {
            best = Some((s, *k));
        }
    }
    best.map(|(_, k)| k)
}
