use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::board::{FloorSegmentation, RoomMaskBoard};
use super::floors::{FloorConfig, FloorDecision, FloorTracker};
use super::gating::{GateDecision, GatingState};
use super::grid::OccupancyGrid;
use super::integrate::{integrate_frame, FrameHint, IntegrationConfig};
use super::pose::{Intrinsics, Pose};
use super::segment::{segment_rooms, SegmentationConfig};
use super::GeometryError;
use crate::ids::{FloorId, KeyframeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    pub resolution_m: f64,
    pub tau_sim: f64,
    /// Re-segment a floor after this many integrated frames on it.
    pub segment_every: usize,
    pub segmentation: SegmentationConfig,
    pub floors: FloorConfig,
    pub integration: IntegrationConfig,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            resolution_m: 0.05,
            tau_sim: 0.85,
            segment_every: 10,
            segmentation: SegmentationConfig::default(),
            floors: FloorConfig::default(),
            integration: IntegrationConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameOutcome {
    pub floor: FloorDecision,
    pub gate: GateDecision,
    /// Revision published by this frame, if it triggered a re-segmentation.
    pub segmentation: Option<u64>,
}

/// Full-rate geometric processing: floors, per-floor grids, room masks and
/// keyframe gating.
#[derive(Debug)]
pub struct GeometricStream {
    cfg: GeometryConfig,
    floors: FloorTracker,
    grids: BTreeMap<FloorId, OccupancyGrid>,
    gating: GatingState,
    board: Arc<RoomMaskBoard>,
    since_segment: BTreeMap<FloorId, usize>,
}

impl GeometricStream {
    pub fn new(cfg: GeometryConfig, board: Arc<RoomMaskBoard>) -> Self {
        GeometricStream {
            floors: FloorTracker::new(cfg.floors.clone()),
            gating: GatingState::new(cfg.tau_sim),
            grids: BTreeMap::new(),
            board,
            since_segment: BTreeMap::new(),
            cfg,
        }
    }

    pub fn config(&self) -> &GeometryConfig {
        &self.cfg
    }

    pub fn board(&self) -> &Arc<RoomMaskBoard> {
        &self.board
    }

    pub fn floor_tracker(&self) -> &FloorTracker {
        &self.floors
    }

    pub fn grid(&self, floor: FloorId) -> Option<&OccupancyGrid> {
        self.grids.get(&floor)
    }

    pub fn grids(&self) -> &BTreeMap<FloorId, OccupancyGrid> {
        &self.grids
    }

    pub fn observe(
        &mut self,
        keyframe_id: KeyframeId,
        pose: &Pose,
        hint: &FrameHint,
        intrinsics: Option<&Intrinsics>,
        feature: &[f32],
    ) -> Result<FrameOutcome, GeometryError> {
        let decision = self.floors.observe(pose.position[2]);
        let floor = decision.floor();
        if !self.grids.contains_key(&floor) {
            self.grids.insert(floor, OccupancyGrid::new(floor, self.cfg.resolution_m));
            self.board.register_floor(floor);
        }
        let grid = self.grids.get_mut(&floor).expect("grid just inserted");
        integrate_frame(grid, pose, hint, intrinsics, &self.cfg.integration)?;
        let n = self.since_segment.entry(floor).or_insert(0);
        *n += 1;
        let segmentation = if *n >= self.cfg.segment_every.max(1) {
            *n = 0;
            Some(self.segment_now(floor)?.revision)
        } else {
            None
        };
        let gate = self.gating.gate(feature, keyframe_id)?;
        Ok(FrameOutcome { floor: decision, gate, segmentation })
    }

    /// Segments a floor immediately and publishes the result.
    pub fn segment_now(&mut self, floor: FloorId) -> Result<Arc<FloorSegmentation>, GeometryError> {
        let grid = self.grids.get(&floor).ok_or(GeometryError::UnknownFloor(floor))?;
        let masks = segment_rooms(grid, &self.cfg.segmentation);
        self.board.publish(floor, masks);
        self.since_segment.insert(floor, 0);
        self.board.latest(floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::integrate::FreespaceScan;

    /// Rays from `c` to the walls of the box `[x0, x1] × [y0, y1]`.
    fn box_scan(c: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> FrameHint {
        let n = 1440;
        let polygon: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let a = k as f64 / n as f64 * std::f64::consts::TAU;
                let (dx, dy) = (a.cos(), a.sin());
                let tx = if dx > 0.0 { (hi[0] - c[0]) / dx } else { (lo[0] - c[0]) / dx };
                let ty = if dy > 0.0 { (hi[1] - c[1]) / dy } else { (lo[1] - c[1]) / dy };
                let t = tx.abs().min(ty.abs()) + 0.001;
                [c[0] + t * dx, c[1] + t * dy]
            })
            .collect();
        FrameHint::Freespace(FreespaceScan { hit: vec![true; n], polygon })
    }

    #[test]
    fn latest_mask_covers_earlier_free_cells() {
        let board = Arc::new(RoomMaskBoard::new());
        let cfg = GeometryConfig { segment_every: 1, ..Default::default() };
        let mut s = GeometricStream::new(cfg, board.clone());
        let mut known_at_t: Vec<(i32, i32)> = Vec::new();
        for k in 0..6u64 {
            let c = [k as f64 * 0.8, 0.0];
            let pose = Pose::looking(k as f64, [c[0], c[1], 1.2], 0.0);
            s.observe(KeyframeId(k), &pose, &box_scan(c, [-1.0, -1.5], [6.0, 1.5]), None, &[1.0, k as f32]).unwrap();
            if k == 2 {
                known_at_t = s.grid(FloorId(1)).unwrap().free_cells().collect();
            }
        }
        let latest = board.latest(FloorId(1)).unwrap();
        assert_eq!(latest.revision, 6);
        for c in known_at_t {
            assert!(latest.masks.iter().any(|m| m.contains(c)), "cell {c:?} lost");
        }
    }

    #[test]
    fn per_frame_budget_on_large_grid() {
        // a 512×512 grid: one 25.6 m square room fully observed
        let board = Arc::new(RoomMaskBoard::new());
        let cfg = GeometryConfig { segment_every: 1, ..Default::default() };
        let mut s = GeometricStream::new(cfg, board);
        let c = [12.8, 12.8];
        let n = 2048;
        let polygon: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let a = k as f64 / n as f64 * std::f64::consts::TAU;
                let (dx, dy) = (a.cos(), a.sin());
                let t = (12.8 / dx.abs().max(1e-9)).min(12.8 / dy.abs().max(1e-9));
                [c[0] + t * dx, c[1] + t * dy]
            })
            .collect();
        let hint = FrameHint::Freespace(FreespaceScan { hit: vec![true; n], polygon });
        let pose = Pose::looking(0.0, [c[0], c[1], 1.2], 0.0);
        s.observe(KeyframeId(0), &pose, &hint, None, &[1.0, 0.0]).unwrap();
        assert!(s.grid(FloorId(1)).unwrap().dims().0 >= 512);
        let sw = crate::clock::Stopwatch::start();
        s.observe(KeyframeId(1), &pose, &hint, None, &[0.0, 1.0]).unwrap();
        let ms = sw.elapsed_ms();
        assert!(ms < 500.0, "geometric frame took {ms} ms");
    }
}
