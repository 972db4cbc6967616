//! End-to-end map building from a recorded sequence.
//!
//! The geometric stream runs on its own thread and feeds a bounded queue;
//! the writer drains it, owns the graph, and runs the supervisor. Everything
//! the writer needs (floors, segmentations, grid snapshots, keyframes)
//! travels through the queue in frame order, so builds are deterministic no
//! matter how the two threads interleave.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::sync::Arc;

use log::{debug, info};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::geometry::board::{FloorSegmentation, RoomMaskBoard};
use crate::geometry::floors::{FloorBand, FloorDecision};
use crate::geometry::grid::OccupancyGrid;
use crate::geometry::integrate::FrameHint;
use crate::geometry::mask::{cell_of, CellMask};
use crate::geometry::pose::Pose;
use crate::geometry::stream::GeometricStream;
use crate::geometry::GeometryError;
use crate::graph::persist::{save_map, MapError};
use crate::graph::{FloorNode, GraphError, GraphSettings, KeyframeStore, SceneGraph};
use crate::ids::{FloorId, KeyframeId};
use crate::providers::Providers;
use crate::semantic::{process_keyframe, ObservationFrame};
use crate::sequence::{Sequence, SequenceError};
use crate::supervisor::{
    confirm_soft_trigger, region_at, render_bev, run_update_with_masks, SupervisorMode, TriggerReason, TriggerState,
    UpdateReport,
};

pub const UPDATES_FILE: &str = "updates.jsonl";
pub const RESUME_FILE: &str = "RESUME";
pub const BEV_DIR: &str = "bev";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("frame {frame}: {source}")]
    Geometry {
        frame: usize,
        #[source]
        source: GeometryError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("geometric stream stopped unexpectedly")]
    Disconnected,
}

impl BuildError {
    /// Input problems as opposed to failures while running.
    pub fn is_schema(&self) -> bool {
        matches!(self, BuildError::Sequence(e) if e.is_schema())
    }
}

/// A supervisor decision, kept for reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub frame: usize,
    pub floor_id: FloorId,
    pub reason: String,
    pub hard: bool,
    /// False when the model supervisor declined the rules proposal.
    pub fired: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub frames: usize,
    pub keyframes: usize,
    pub created: usize,
    pub merged: usize,
    pub skipped: usize,
    pub edges: usize,
}

#[derive(Clone, Debug)]
pub struct BuildOutcome {
    pub graph: SceneGraph,
    pub store: KeyframeStore,
    pub updates: Vec<UpdateReport>,
    pub triggers: Vec<TriggerEvent>,
    pub stats: BuildStats,
    /// `(file name, png)` for every update, when enabled.
    pub bev: Vec<(String, Vec<u8>)>,
}

/// A build that stopped half-way, with everything done up to `frame`.
#[derive(Debug)]
pub struct PartialBuild {
    pub error: BuildError,
    pub frame: usize,
    pub outcome: BuildOutcome,
}

struct Keyframe {
    frame: ObservationFrame,
    image: Option<Vec<u8>>,
}

enum Msg {
    Floor(FloorBand),
    Segmentation { seg: Arc<FloorSegmentation>, grid: Arc<OccupancyGrid> },
    Frame { index: usize, floor: FloorId, pose: Pose, keyframe: Option<Keyframe> },
    Failed { index: usize, error: BuildError },
}

fn hint_of(seq: &Sequence, i: usize) -> Result<FrameHint, SequenceError> {
    let f = &seq.frames[i];
    if let Some(s) = &f.freespace {
        return Ok(FrameHint::Freespace(s.clone()));
    }
    Ok(match seq.depth(i)? {
        Some(d) => FrameHint::Depth(d),
        None => FrameHint::None,
    })
}

fn snapshot(geo: &GeometricStream, seg: Arc<FloorSegmentation>) -> Msg {
    let grid = geo.grid(seg.floor_id).cloned().unwrap_or_else(|| OccupancyGrid::new(seg.floor_id, geo.config().resolution_m));
    Msg::Segmentation { seg, grid: Arc::new(grid) }
}

/// Geometric stream: one pass over the frames, then a final segmentation
/// of every floor. Returns early if the writer hangs up.
fn produce(seq: &Sequence, cfg: &RunConfig, tx: SyncSender<Msg>) {
    let board = Arc::new(RoomMaskBoard::new());
    let mut geo = GeometricStream::new(cfg.geometry.clone(), board.clone());
    let k = seq.meta.camera();
    let send = |m: Msg| tx.send(m).is_ok();
    for i in 0..seq.frames.len() {
        let pose = seq.frames[i].pose();
        let kf = KeyframeId(i as u64);
        let step = (|| -> Result<_, BuildError> {
            let hint = hint_of(seq, i)?;
            let feature = seq.feature(i)?;
            geo.observe(kf, &pose, &hint, Some(&k), &feature).map_err(|source| BuildError::Geometry { frame: i, source })
        })();
        let outcome = match step {
            Ok(o) => o,
            Err(error) => {
                send(Msg::Failed { index: i, error });
                return;
            }
        };
        if let FloorDecision::Created { band, .. } = &outcome.floor {
            if !send(Msg::Floor(band.clone())) {
                return;
            }
        }
        let floor = outcome.floor.floor();
        if outcome.segmentation.is_some() {
            let seg = board.latest(floor).expect("floor registered by observe");
            if !send(snapshot(&geo, seg)) {
                return;
            }
        }
        let keyframe = if outcome.gate.is_push() {
            let image = match seq.image(i) {
                Ok(x) => x,
                Err(e) => {
                    send(Msg::Failed { index: i, error: e.into() });
                    return;
                }
            };
            Some(Keyframe {
                frame: ObservationFrame {
                    keyframe_id: kf,
                    floor_id: floor,
                    pose,
                    intrinsics: k,
                    detections: seq.detections(i).to_vec(),
                },
                image,
            })
        } else {
            None
        };
        if !send(Msg::Frame { index: i, floor, pose, keyframe }) {
            return;
        }
    }
    let floors: Vec<FloorId> = geo.grids().keys().copied().collect();
    for f in floors {
        match geo.segment_now(f) {
            Ok(seg) => {
                if !send(snapshot(&geo, seg)) {
                    return;
                }
            }
            Err(source) => {
                send(Msg::Failed { index: seq.frames.len(), error: BuildError::Geometry { frame: seq.frames.len(), source } });
                return;
            }
        }
    }
}

struct Writer<'a> {
    cfg: &'a RunConfig,
    providers: &'a Providers,
    graph: SceneGraph,
    store: KeyframeStore,
    trig: TriggerState,
    latest: BTreeMap<FloorId, (Arc<FloorSegmentation>, Arc<OccupancyGrid>)>,
    updates: Vec<UpdateReport>,
    triggers: Vec<TriggerEvent>,
    stats: BuildStats,
    bev: Vec<(String, Vec<u8>)>,
    width: u32,
    height: u32,
}

impl<'a> Writer<'a> {
    fn bev_rooms(&self, floor: FloorId) -> Vec<(u64, CellMask)> {
        self.graph.rooms_on(floor).map(|r| (r.id.0, r.mask.clone())).collect()
    }

    fn update(&mut self, floor: FloorId, reason: &str, pose: Option<&Pose>) {
        let Some((seg, grid)) = self.latest.get(&floor).cloned() else {
            debug!("no segmentation yet on {floor}, update deferred");
            return;
        };
        let report = run_update_with_masks(
            &mut self.graph,
            floor,
            &grid,
            seg.masks.clone(),
            &self.store,
            self.providers,
            &self.cfg.update,
            reason,
        );
        let masks: Vec<CellMask> = self.graph.rooms_on(floor).map(|r| r.mask.clone()).collect();
        self.trig.record_update(floor, pose, masks);
        if self.cfg.write_bev {
            let rooms = self.bev_rooms(floor);
            let refs: Vec<(u64, &CellMask)> = rooms.iter().map(|(id, m)| (*id, m)).collect();
            let png = render_bev(&grid, &refs, &self.trig).to_png();
            self.bev.push((format!("update_{:04}_{floor}.png", report.update_index), png));
        }
        info!("{floor} update ({reason}): {} rooms, {} areas", report.rooms_matched + report.rooms_created, report.areas_built);
        self.updates.push(report);
    }

    fn frame(&mut self, index: usize, floor: FloorId, pose: Pose, keyframe: Option<Keyframe>) {
        self.stats.frames += 1;
        let before = self.trig.current_floor;
        self.trig.note_floor(floor);
        if self.trig.check_hard_trigger() {
            if let Some(left) = before {
                self.triggers.push(TriggerEvent {
                    frame: index,
                    floor_id: left,
                    reason: TriggerReason::FloorChange.as_str().into(),
                    hard: true,
                    fired: true,
                });
                self.update(left, TriggerReason::FloorChange.as_str(), None);
            }
        }
        self.trig.note_motion(floor, &pose);

        if let Some(kf) = keyframe {
            self.stats.keyframes += 1;
            let id = kf.frame.keyframe_id;
            let image = kf.image.unwrap_or_default();
            let payload = (!image.is_empty()).then(|| Arc::new(image.clone()));
            self.store.insert(id, pose, self.width, self.height, image);
            let masks = self.latest.get(&floor).map(|(s, _)| s.masks.clone()).unwrap_or_default();
            let d = process_keyframe(&mut self.graph, &kf.frame, &masks, payload, self.providers, &self.cfg.association);
            self.stats.created += d.created;
            self.stats.merged += d.merged;
            self.stats.skipped += d.skipped;
            self.stats.edges += d.edges;
            self.trig.note_objects_changed(d.created);
        }

        let xy = pose.xy();
        let region = self
            .latest
            .get(&floor)
            .and_then(|(s, _)| region_at(&s.masks, cell_of(xy[0], xy[1], self.graph.settings.grid_resolution_m)).cloned());
        let Some(reason) = self.trig.rules_check(floor, xy, region.as_ref()) else { return };
        let Some((_, grid)) = self.latest.get(&floor).cloned() else { return };
        let bev = (self.cfg.supervisor == SupervisorMode::Model).then(|| {
            let rooms = self.bev_rooms(floor);
            let refs: Vec<(u64, &CellMask)> = rooms.iter().map(|(id, m)| (*id, m)).collect();
            render_bev(&grid, &refs, &self.trig)
        });
        let decision = confirm_soft_trigger(self.cfg.supervisor, &reason, bev.as_ref(), self.providers);
        self.triggers.push(TriggerEvent {
            frame: index,
            floor_id: floor,
            reason: decision.reason.clone(),
            hard: false,
            fired: decision.trigger,
        });
        if decision.trigger {
            self.update(floor, reason.as_str(), Some(&pose));
        }
    }

    fn finish(mut self) -> BuildOutcome {
        let floors: Vec<FloorId> = self.latest.keys().copied().collect();
        for f in floors {
            self.update(f, TriggerReason::Final.as_str(), None);
        }
        // keep only keyframes something still points at
        let mut used: std::collections::BTreeSet<KeyframeId> =
            self.graph.objects().map(|o| o.best_view.keyframe_id).collect();
        used.extend(self.graph.rooms().filter_map(|r| r.best_view_keyframe));
        self.store.retain(|k| used.contains(&k));
        self.into_outcome()
    }

    fn into_outcome(self) -> BuildOutcome {
        BuildOutcome {
            graph: self.graph,
            store: self.store,
            updates: self.updates,
            triggers: self.triggers,
            stats: self.stats,
            bev: self.bev,
        }
    }

    fn run(mut self, rx: Receiver<Msg>) -> Result<BuildOutcome, Box<PartialBuild>> {
        let mut last = 0;
        for msg in rx {
            match msg {
                Msg::Floor(b) => {
                    let node = FloorNode { id: b.id, index: b.index, z_min: b.z_min, z_max: b.z_max, z_ref: b.z_ref };
                    if let Err(e) = self.graph.insert_floor(node) {
                        return Err(Box::new(PartialBuild { error: e.into(), frame: last, outcome: self.into_outcome() }));
                    }
                }
                Msg::Segmentation { seg, grid } => {
                    self.latest.insert(seg.floor_id, (seg, grid));
                }
                Msg::Frame { index, floor, pose, keyframe } => {
                    last = index;
                    self.frame(index, floor, pose, keyframe);
                }
                Msg::Failed { index, error } => {
                    return Err(Box::new(PartialBuild { error, frame: index, outcome: self.into_outcome() }));
                }
            }
        }
        Ok(self.finish())
    }
}

/// Builds a map from an opened sequence.
pub fn build_map(seq: &Sequence, cfg: &RunConfig, providers: &Providers) -> Result<BuildOutcome, Box<PartialBuild>> {
    let settings = GraphSettings {
        embedding_dim: cfg.embedding_dim,
        grid_resolution_m: cfg.geometry.resolution_m,
        created_at: cfg.created_at,
        known_categories: cfg.association.known_categories.clone(),
    };
    let writer = Writer {
        cfg,
        providers,
        graph: SceneGraph::new(settings),
        store: KeyframeStore::new(),
        trig: TriggerState::new(cfg.triggers.clone()),
        latest: BTreeMap::new(),
        updates: Vec::new(),
        triggers: Vec::new(),
        stats: BuildStats::default(),
        bev: Vec::new(),
        width: seq.meta.image_size.width,
        height: seq.meta.image_size.height,
    };
    std::thread::scope(|s| {
        let (tx, rx) = sync_channel(cfg.queue_capacity.max(1));
        s.spawn(move || produce(seq, cfg, tx));
        writer.run(rx)
    })
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BuildError + '_ {
    move |source| BuildError::Io { path: path.to_path_buf(), source }
}

/// Writes the map, `updates.jsonl` and the BEV images into `out`.
pub fn write_outputs(out: &Path, o: &BuildOutcome) -> Result<(), BuildError> {
    save_map(&o.graph, &o.store, out)?;
    let mut lines = String::new();
    for u in &o.updates {
        lines.push_str(&serde_json::to_string(u).expect("report serializes"));
        lines.push('\n');
    }
    let path = out.join(UPDATES_FILE);
    std::fs::write(&path, lines).map_err(io(&path))?;
    if !o.bev.is_empty() {
        let dir = out.join(BEV_DIR);
        std::fs::create_dir_all(&dir).map_err(io(&dir))?;
        for (name, png) in &o.bev {
            let p = dir.join(name);
            std::fs::write(&p, png).map_err(io(&p))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResumeMarker {
    /// First frame that was not fully processed.
    pub frame: usize,
    pub error: String,
}

/// Opens `input`, builds, and writes everything to `out`. On a failure
/// after the sequence was opened, the partial map is still written along
/// with a `RESUME` marker.
pub fn build_dir(input: &Path, out: &Path, cfg: &RunConfig, providers: &Providers) -> Result<BuildOutcome, BuildError> {
    let seq = Sequence::open(input)?;
    std::fs::create_dir_all(out).map_err(io(out))?;
    let marker = out.join(RESUME_FILE);
    match build_map(&seq, cfg, providers) {
        Ok(o) => {
            write_outputs(out, &o)?;
            if marker.exists() {
                std::fs::remove_file(&marker).map_err(io(&marker))?;
            }
            Ok(o)
        }
        Err(p) => {
            let p = *p;
            write_outputs(out, &p.outcome)?;
            let m = ResumeMarker { frame: p.frame, error: p.error.to_string() };
            std::fs::write(&marker, serde_json::to_string_pretty(&m).expect("marker serializes")).map_err(io(&marker))?;
            Err(p.error)
        }
    }
}
