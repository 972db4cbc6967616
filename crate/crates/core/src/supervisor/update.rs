use std::collections::{BTreeMap, BTreeSet};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::bestview::{select_room_best_view, ViewCone};
use super::labels::{stub_area_label, stub_area_summary, stub_room_label, stub_room_summary};
use crate::geometry::grid::OccupancyGrid;
use crate::geometry::mask::CellMask;
use crate::geometry::segment::{segment_rooms, SegmentationConfig};
use crate::graph::{KeyframeStore, SceneGraph};
use crate::ids::{AreaId, FloorId, ObjectId, RoomId};
use crate::providers::{prompts, ChatRequest, Part, Providers, Role};
use crate::semantic::cluster_xy;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpdateConfig {
    pub area_radius_m: f64,
    pub room_match_iou: f64,
    /// Off for the "no areas" ablation: rooms are kept, areas never built.
    pub build_areas: bool,
    pub hfov_deg: f64,
    pub view_range_m: f64,
}

impl Default for UpdateConfig {
    fn default() -> Self {
        UpdateConfig { area_radius_m: 2.0, room_match_iou: 0.3, build_areas: true, hfov_deg: 90.0, view_range_m: 8.0 }
    }
}

impl UpdateConfig {
    pub fn view_cone(&self) -> ViewCone {
        ViewCone { hfov: self.hfov_deg.to_radians(), max_range_m: self.view_range_m, ..ViewCone::default() }
    }
}

/// One line of updates.jsonl.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub floor_id: FloorId,
    pub reason: String,
    pub update_index: u64,
    pub revision_before: u64,
    pub revision_after: u64,
    pub rooms_matched: usize,
    pub rooms_created: usize,
    pub rooms_removed: usize,
    pub objects_moved: usize,
    pub areas_built: usize,
    pub provider_fallbacks: usize,
}

/// Segments the floor's grid, then runs [`run_update_with_masks`].
pub fn run_update(
    graph: &mut SceneGraph,
    floor: FloorId,
    grid: &OccupancyGrid,
    seg: &SegmentationConfig,
    store: &KeyframeStore,
    providers: &Providers,
    cfg: &UpdateConfig,
    reason: &str,
) -> UpdateReport {
    let masks = segment_rooms(grid, seg);
    run_update_with_masks(graph, floor, grid, masks, store, providers, cfg, reason)
}

/// The bottom-up rebuild of one floor: room matching, object
/// re-assignment, areas, best views, summaries. Steps always run in this
/// order; model failures fall back to the offline namers.
#[allow(clippy::too_many_arguments)]
pub fn run_update_with_masks(
    graph: &mut SceneGraph,
    floor: FloorId,
    grid: &OccupancyGrid,
    masks: Vec<CellMask>,
    store: &KeyframeStore,
    providers: &Providers,
    cfg: &UpdateConfig,
    reason: &str,
) -> UpdateReport {
    let mut report = UpdateReport {
        floor_id: floor,
        reason: reason.to_string(),
        revision_before: graph.revision(),
        ..Default::default()
    };
    if graph.floor(floor).is_none() {
        warn!("update on unknown floor {floor}");
        report.revision_after = graph.revision();
        return report;
    }
    let before: BTreeMap<ObjectId, Option<RoomId>> = graph.objects().map(|o| (o.id, o.room_id)).collect();

    // (1) room identity by greedy maximal IoU
    let old: Vec<(RoomId, CellMask)> = graph.rooms_on(floor).map(|r| (r.id, r.mask.clone())).collect();
    let mut pairs = Vec::new();
    for (o, (rid, om)) in old.iter().enumerate() {
        for (n, nm) in masks.iter().enumerate() {
            let iou = om.iou(nm);
            if iou >= cfg.room_match_iou {
                pairs.push((iou, o, n, *rid));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.3.cmp(&b.3)).then(a.2.cmp(&b.2)));
    let mut old_used = vec![false; old.len()];
    let mut new_used: Vec<Option<RoomId>> = vec![None; masks.len()];
    for (_, o, n, rid) in pairs {
        if !old_used[o] && new_used[n].is_none() {
            old_used[o] = true;
            new_used[n] = Some(rid);
        }
    }
    for (o, (rid, _)) in old.iter().enumerate() {
        if !old_used[o] {
            if graph.remove_room(*rid).is_ok() {
                report.rooms_removed += 1;
            }
        }
    }
    for (n, mask) in masks.into_iter().enumerate() {
        match new_used[n] {
            Some(rid) => {
                graph.set_room_mask(rid, mask).expect("matched room exists");
                report.rooms_matched += 1;
            }
            None => {
                graph.insert_room(floor, mask).expect("floor checked above");
                report.rooms_created += 1;
            }
        }
    }

    // (2) objects follow the masks
    graph.reassign_objects_to_rooms();
    report.objects_moved = graph
        .objects()
        .filter(|o| before.get(&o.id).is_some_and(|prev| *prev != o.room_id))
        .count();

    let rooms: Vec<RoomId> = graph.rooms_on(floor).map(|r| r.id).collect();
    let cone = cfg.view_cone();
    let band = graph.floor(floor).map(|f| (f.z_min, f.z_max)).expect("floor checked above");
    let candidates: Vec<_> = store
        .entries()
        .filter(|e| e.pose.position[2] >= band.0 && e.pose.position[2] < band.1)
        .map(|e| (e.id, e.pose))
        .collect();

    for rid in rooms {
        // (3)+(4) areas
        let mut area_texts: Vec<(String, String)> = Vec::new();
        if cfg.build_areas {
            let built = build_areas(graph, rid, providers, cfg, &mut report);
            report.areas_built += built.len();
            area_texts = built;
        } else {
            for a in graph.room(rid).map(|r| r.area_ids.clone()).unwrap_or_default() {
                let _ = graph.remove_area(a);
            }
        }

        // (5) best view
        let room = graph.room(rid).expect("room listed above").clone();
        let best = select_room_best_view(&room.mask, &candidates, grid, &cone).or(room.best_view_keyframe);

        // (6) summary
        let labels: Vec<String> = graph.objects_in_room(rid).map(|o| o.label.clone()).collect();
        let (label, summary) = summarize_room(&labels, &area_texts, best.and_then(|k| store.image(k)), providers)
            .unwrap_or_else(|| {
                report.provider_fallbacks += 1;
                let l = stub_room_label(&labels);
                let s = stub_room_summary(&l, &area_texts);
                (l, s)
            });
        graph.set_room_semantics(rid, label, summary, best).expect("room exists");
    }

    graph.note_update();
    report.update_index = graph.update_count();
    report.revision_after = graph.revision();
    info!(
        "update {} on {floor}: {} matched, {} created, {} removed, {} moved, {} areas",
        report.update_index,
        report.rooms_matched,
        report.rooms_created,
        report.rooms_removed,
        report.objects_moved,
        report.areas_built
    );
    report
}

/// Clusters a room's objects into areas, keeping area ids whose members
/// overlap the new clusters. Returns (label, summary) per area.
fn build_areas(
    graph: &mut SceneGraph,
    rid: RoomId,
    providers: &Providers,
    cfg: &UpdateConfig,
    report: &mut UpdateReport,
) -> Vec<(String, String)> {
    let objs: Vec<(ObjectId, [f64; 2], String, String)> = graph
        .objects_in_room(rid)
        .map(|o| (o.id, o.xy(), o.label.clone(), o.description.clone()))
        .collect();
    let pts: Vec<[f64; 2]> = objs.iter().map(|o| o.1).collect();
    let labels = cluster_xy(&pts, cfg.area_radius_m);
    let n_groups = labels.iter().copied().max().map(|m| m + 1).unwrap_or(0);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_groups];
    for (k, g) in labels.iter().enumerate() {
        groups[*g].push(k);
    }

    let old: Vec<(AreaId, BTreeSet<ObjectId>)> = graph
        .room(rid)
        .map(|r| r.area_ids.clone())
        .unwrap_or_default()
        .into_iter()
        .filter_map(|a| graph.area(a).map(|x| (a, x.object_ids.iter().copied().collect())))
        .collect();
    let mut pairs = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        for (oi, (aid, members)) in old.iter().enumerate() {
            let overlap = g.iter().filter(|k| members.contains(&objs[**k].0)).count();
            if overlap > 0 {
                pairs.push((overlap, gi, oi, *aid));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.3.cmp(&b.3)).then(a.1.cmp(&b.1)));
    let mut g_to: Vec<Option<AreaId>> = vec![None; groups.len()];
    let mut o_used = vec![false; old.len()];
    for (_, gi, oi, aid) in pairs {
        if g_to[gi].is_none() && !o_used[oi] {
            g_to[gi] = Some(aid);
            o_used[oi] = true;
        }
    }

    let mut out = Vec::new();
    let mut placed = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let ids: Vec<ObjectId> = g.iter().map(|k| objs[*k].0).collect();
        let member_labels: Vec<String> = g.iter().map(|k| objs[*k].2.clone()).collect();
        let member_desc: Vec<(String, String)> = g.iter().map(|k| (objs[*k].2.clone(), objs[*k].3.clone())).collect();
        let (label, summary) = summarize_area(&member_desc, providers).unwrap_or_else(|| {
            report.provider_fallbacks += 1;
            (stub_area_label(&member_labels), stub_area_summary(&member_labels))
        });
        let res = match g_to[gi] {
            Some(aid) => graph.restore_area(aid, rid, label.clone(), summary.clone(), ids),
            None => graph.insert_area(rid, label.clone(), summary.clone(), ids),
        };
        match res {
            Ok(a) => {
                placed.push(a);
                out.push((label, summary));
            }
            Err(e) => warn!("area in {rid} not built: {e}"),
        }
    }
    for (oi, (aid, _)) in old.iter().enumerate() {
        if !o_used[oi] && graph.area(*aid).is_some() && !placed.contains(aid) {
            let _ = graph.remove_area(*aid);
        }
    }
    out
}

fn summarize_area(members: &[(String, String)], providers: &Providers) -> Option<(String, String)> {
    let mut text = String::from("Objects:\n");
    for (l, d) in members {
        if d.is_empty() {
            text.push_str(&format!("- {l}\n"));
        } else {
            text.push_str(&format!("- {l}: {d}\n"));
        }
    }
    let req = ChatRequest::text(Role::Summarizer, prompts::SUMMARIZER_AREA, text);
    let reply = providers.chat(&req).ok()?.reply;
    let mut lines = reply.lines().map(str::trim).filter(|l| !l.is_empty());
    let label = lines.next()?.trim_matches(|c: char| c == '"' || c == '.' || c == '*').to_string();
    if !label.to_ascii_lowercase().ends_with("area") {
        return None;
    }
    let summary: Vec<&str> = lines.collect();
    Some((label, summary.join(" ")))
}

fn summarize_room(
    labels: &[String],
    areas: &[(String, String)],
    image: Option<std::sync::Arc<Vec<u8>>>,
    providers: &Providers,
) -> Option<(String, String)> {
    let mut text = String::from("Areas:\n");
    for (l, s) in areas {
        text.push_str(&format!("- {l}: {s}\n"));
    }
    if areas.is_empty() {
        text.push_str(&format!("- objects: {}\n", labels.join(", ")));
    }
    let mut req = ChatRequest::text(Role::Summarizer, prompts::SUMMARIZER_ROOM, text);
    if let Some(img) = image {
        req.parts.push(Part::Image(img));
    }
    let reply = providers.chat(&req).ok()?.reply;
    let mut lines = reply.lines().map(str::trim).filter(|l| !l.is_empty());
    let label = lines.next()?.trim_matches(|c: char| c == '"' || c == '.' || c == '*').to_ascii_lowercase();
    if label.is_empty() || label.split_whitespace().count() > 4 {
        return None;
    }
    let summary: Vec<&str> = lines.collect();
    Some((label, summary.join(" ")))
}
