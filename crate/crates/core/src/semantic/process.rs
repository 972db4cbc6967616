use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use super::associate::{associate, consolidate, Association, AssociationConfig, Candidate, MergeRecord, TopologyMode};
use super::backproject::{backproject, SkipReason};
use super::topology::{geometric_topology, model_topology};
use super::types::ObservationFrame;
use crate::geometry::mask::{cell_of, CellMask};
use crate::graph::embedding_norm_of;
use crate::graph::{BestViewRef, SceneGraph};
use crate::ids::{ObjectId, RoomId};
use crate::providers::Providers;

/// Minimum IoU for a fresh room mask to stand for an existing room node.
pub const ROOM_MATCH_IOU: f64 = 0.3;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameDelta {
    pub created: usize,
    pub merged: usize,
    pub skipped: usize,
    pub edges: usize,
    #[serde(skip)]
    pub merges: Vec<MergeRecord>,
    #[serde(skip)]
    pub touched: Vec<ObjectId>,
    pub errors: Vec<String>,
}

/// Room node standing for each mask, by best IoU ≥ [`ROOM_MATCH_IOU`].
pub fn match_masks_to_rooms(graph: &SceneGraph, floor: crate::ids::FloorId, masks: &[CellMask]) -> Vec<Option<RoomId>> {
    masks
        .iter()
        .map(|m| {
            graph
                .rooms_on(floor)
                .map(|r| (r.mask.iou(m), r.id))
                .filter(|(iou, _)| *iou >= ROOM_MATCH_IOU)
                .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
                .map(|(_, id)| id)
        })
        .collect()
}

/// Folds one keyframe's detections into the graph.
///
/// `masks` is the latest segmentation of the keyframe's floor at the time of
/// processing, not at capture.
pub fn process_keyframe(
    graph: &mut SceneGraph,
    frame: &ObservationFrame,
    masks: &[CellMask],
    image: Option<Arc<Vec<u8>>>,
    providers: &Providers,
    cfg: &AssociationConfig,
) -> FrameDelta {
    let mut delta = FrameDelta::default();
    let room_of_mask = match_masks_to_rooms(graph, frame.floor_id, masks);
    let res = graph.settings.grid_resolution_m;
    let k = &frame.intrinsics;
    let mut touched = BTreeSet::new();

    for (n, det) in frame.detections.iter().enumerate() {
        let skip = |delta: &mut FrameDelta, why: String| {
            log::debug!("{} detection {n} ({}) skipped: {why}", frame.keyframe_id, det.label);
            delta.skipped += 1;
            delta.errors.push(format!("{} detection {n}: {why}", frame.keyframe_id));
        };
        if det.embedding.len() != graph.settings.embedding_dim {
            skip(&mut delta, format!("embedding dimension {} != {}", det.embedding.len(), graph.settings.embedding_dim));
            continue;
        }
        let norm = embedding_norm_of(&det.embedding);
        if (norm - 1.0).abs() > 1e-3 {
            skip(&mut delta, SkipReason::BadEmbedding.to_string());
            continue;
        }
        if !det.bbox2d.is_valid_within(k.width, k.height) {
            skip(&mut delta, SkipReason::BadBox.to_string());
            continue;
        }
        let (centroid, bbox3d) = match backproject(det, &frame.pose, k, cfg.k_min) {
            Ok(x) => x,
            Err(e) => {
                skip(&mut delta, e.to_string());
                continue;
            }
        };
        let cell = cell_of(centroid[0], centroid[1], res);
        let room_id = masks.iter().position(|m| m.contains(cell)).and_then(|i| room_of_mask[i]);
        let candidate = Candidate {
            label: det.label.clone(),
            known_category: cfg.is_known(&det.label, det.known_category),
            embedding: det.embedding.iter().map(|v| (*v as f64 / norm) as f32).collect(),
            description: det.description.clone().unwrap_or_default(),
            centroid,
            bbox3d,
            floor_id: frame.floor_id,
            room_id,
            best_view: BestViewRef {
                keyframe_id: frame.keyframe_id,
                bbox2d: det.bbox2d,
                center_offset: det.bbox2d.center_offset(k.width, k.height),
            },
        };
        match associate(graph, &candidate, cfg) {
            Ok(Association::Created(id)) => {
                delta.created += 1;
                touched.insert(id);
            }
            Ok(Association::Merged(m)) => {
                delta.merged += 1;
                touched.insert(m.target);
                let target = m.target;
                delta.merges.push(m);
                match consolidate(graph, target, cfg) {
                    Ok(keep) => {
                        touched.insert(keep);
                    }
                    Err(e) => delta.errors.push(e.to_string()),
                }
            }
            Err(e) => skip(&mut delta, e.to_string()),
        }
    }
    touched.retain(|id| graph.object(*id).is_ok());

    let nodes: Vec<_> = touched.iter().filter_map(|id| graph.object(*id).ok().cloned()).collect();
    if nodes.len() >= 2 {
        let edges = match cfg.topology_mode {
            TopologyMode::Geometric => geometric_topology(&nodes, cfg),
            TopologyMode::Model => model_topology(&nodes, image, providers, cfg),
        };
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                graph.remove_edges_between(a.id, b.id);
            }
        }
        for e in edges {
            match graph.add_edge(e) {
                Ok(()) => delta.edges += 1,
                Err(err) => delta.errors.push(err.to_string()),
            }
        }
    }
    delta.touched = touched.into_iter().collect();
    delta
}
