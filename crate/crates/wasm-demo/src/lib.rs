//! Browser demo over synthetic worlds: room segmentation, a BEV picture of
//! the segmented floor, and a ranked score breakdown for a query.
//!
//! The `demo_*` functions are plain Rust so they can be tested natively;
//! the exported wrappers only convert errors.

use serde_json::json;
use wasm_bindgen::prelude::*;

use ikb_core::geometry::segment::{segment_rooms, SegmentationConfig};
use ikb_core::ids::FloorId;
use ikb_core::providers::{Providers, StubChat};
use ikb_core::retrieval::{breakdown_table, retrieve, RetrievalConfig};
use ikb_core::supervisor::bev::render_bev;
use ikb_core::supervisor::triggers::{TriggerConfig, TriggerState};
use ikb_core::synth::{build_truth_graph, generate_world, WorldParams, WorldSpec};

const RES: f64 = 0.05;
const DIM: usize = 128;

fn world(seed: u32, rooms: u32) -> Result<WorldSpec, String> {
    let p = WorldParams { floors: 1, rooms_per_floor: rooms as usize, ..Default::default() };
    generate_world(seed as u64, &p).map_err(|e| e.to_string())
}

fn masks(w: &WorldSpec, door_half_width_m: f64) -> Vec<ikb_core::geometry::mask::CellMask> {
    let grid = w.truth_grid(1, FloorId(1), RES);
    let cfg = SegmentationConfig { door_half_width_m, ..Default::default() };
    segment_rooms(&grid, &cfg)
}

/// Per true room, the best IoU of any segmented mask, plus the partition
/// check over the floor's free cells.
pub fn demo_segment(seed: u32, rooms: u32, door_half_width_m: f64) -> Result<String, String> {
    let w = world(seed, rooms)?;
    let found = masks(&w, door_half_width_m);
    let free = w.free_cells(1, RES);
    let covered: usize = found.iter().map(|m| m.count()).sum();
    let union: std::collections::BTreeSet<_> = found.iter().flat_map(|m| m.cells()).collect();
    let partition = covered == union.len() && union == free;
    let truth: Vec<_> = w.floors[0]
        .rooms
        .iter()
        .map(|r| {
            let t = w.room_cells(r, RES);
            let best = found.iter().map(|m| m.iou(&t)).fold(0.0, f64::max);
            json!({ "room": r.id, "kind": r.kind, "best_iou": (best * 1000.0).round() / 1000.0 })
        })
        .collect();
    Ok(json!({ "segmented": found.len(), "true_rooms": truth, "partition": partition }).to_string())
}

/// PNG of the segmented floor, one colour per room.
pub fn demo_bev(seed: u32, rooms: u32, door_half_width_m: f64) -> Result<Vec<u8>, String> {
    let w = world(seed, rooms)?;
    let grid = w.truth_grid(1, FloorId(1), RES);
    let found = masks(&w, door_half_width_m);
    let keyed: Vec<(u64, &_)> = found.iter().enumerate().map(|(k, m)| (k as u64 + 1, m)).collect();
    let state = TriggerState::new(TriggerConfig::default());
    Ok(render_bev(&grid, &keyed, &state).to_png())
}

/// Ranked candidates with per-constraint terms, on the world's truth map.
pub fn demo_explain(seed: u32, rooms: u32, query: &str) -> Result<String, String> {
    let w = world(seed, rooms)?;
    let t = build_truth_graph(&w, DIM, true).map_err(|e| e.to_string())?;
    let providers = Providers::stub(DIM, StubChat::standard());
    let a = retrieve(&t.graph, &t.store, query, &providers, &RetrievalConfig::default()).map_err(|e| e.to_string())?;
    Ok(breakdown_table(&t.graph, &a))
}

/// Object labels in the world, for the query box hint.
pub fn demo_labels(seed: u32, rooms: u32) -> Result<String, String> {
    let w = world(seed, rooms)?;
    Ok(w.labels().into_keys().collect::<Vec<_>>().join(", "))
}

#[wasm_bindgen]
pub fn segment(seed: u32, rooms: u32, door_half_width_m: f64) -> Result<String, JsError> {
    demo_segment(seed, rooms, door_half_width_m).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn bev(seed: u32, rooms: u32, door_half_width_m: f64) -> Result<Vec<u8>, JsError> {
    demo_bev(seed, rooms, door_half_width_m).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn explain(seed: u32, rooms: u32, query: &str) -> Result<String, JsError> {
    demo_explain(seed, rooms, query).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn labels(seed: u32, rooms: u32) -> Result<String, JsError> {
    demo_labels(seed, rooms).map_err(|e| JsError::new(&e))
}
