//! Single-document exports of a map: a JSON twin of the map directory and
//! a Graphviz view of the hierarchy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::keyframes::{sha256_hex, KeyframeEntry, KeyframeStore};
use super::nodes::*;
use super::persist::{MapError, FORMAT_VERSION};
use super::scene::{GraphParts, GraphSettings, SceneGraph};
use crate::geometry::mask::{CellMask, RleMask};
use crate::ids::IdCounters;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomRecord {
    #[serde(flatten)]
    pub room: RoomNode,
    pub mask: RleMask,
}

/// Everything a map directory holds, in one JSON value. Images are
/// base64 keyed by content hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub format_version: u32,
    pub settings: GraphSettings,
    pub revision: u64,
    pub update_count: u64,
    pub next_ids: IdCounters,
    pub floors: Vec<FloorNode>,
    pub rooms: Vec<RoomRecord>,
    pub areas: Vec<AreaNode>,
    pub objects: Vec<ObjectNode>,
    pub edges: Vec<SpatialEdge>,
    pub keyframes: Vec<KeyframeEntry>,
    pub tombstones: Vec<String>,
    pub images: BTreeMap<String, String>,
}

pub fn to_document(graph: &SceneGraph, store: &KeyframeStore) -> MapDocument {
    MapDocument {
        format_version: FORMAT_VERSION,
        settings: graph.settings.clone(),
        revision: graph.revision(),
        update_count: graph.update_count(),
        next_ids: graph.id_counters().clone(),
        floors: graph.floors().cloned().collect(),
        rooms: graph.rooms().map(|r| RoomRecord { room: r.clone(), mask: r.mask.to_rle() }).collect(),
        areas: graph.areas().cloned().collect(),
        objects: graph.objects().cloned().collect(),
        edges: graph.edges().cloned().collect(),
        keyframes: store.entries().cloned().collect(),
        tombstones: graph.tombstones().iter().cloned().collect(),
        images: store.payloads().map(|(h, b)| (h.clone(), B64.encode(b.as_slice()))).collect(),
    }
}

pub fn from_document(doc: MapDocument) -> Result<(SceneGraph, KeyframeStore), MapError> {
    let corrupt = |message: String| MapError::Corrupt { file: "document".into(), line: 0, message };
    if doc.format_version != FORMAT_VERSION {
        return Err(MapError::Version(doc.format_version));
    }
    let mut rooms = Vec::with_capacity(doc.rooms.len());
    for r in doc.rooms {
        let mut room = r.room;
        room.mask = CellMask::from_rle(&r.mask).map_err(|e| corrupt(format!("room {}: {e}", room.id)))?;
        rooms.push(room);
    }
    let mut store = KeyframeStore::new();
    for (hash, text) in doc.images {
        let bytes = B64.decode(text.as_bytes()).map_err(|e| corrupt(format!("image {hash}: {e}")))?;
        if sha256_hex(&bytes) != hash {
            return Err(corrupt(format!("image {hash} does not match its content hash")));
        }
        store.attach_payload(hash, bytes);
    }
    for k in doc.keyframes {
        store.insert_entry(k);
    }
    let graph = SceneGraph::from_parts(GraphParts {
        settings: doc.settings,
        floors: doc.floors,
        rooms,
        areas: doc.areas,
        objects: doc.objects,
        edges: doc.edges,
        revision: doc.revision,
        updates: doc.update_count,
        ids: doc.next_ids,
        tombstones: doc.tombstones,
    });
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(MapError::Invalid(violations));
    }
    Ok((graph, store))
}

pub fn to_json(graph: &SceneGraph, store: &KeyframeStore) -> String {
    let mut s = serde_json::to_string_pretty(&to_document(graph, store)).expect("map document serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<(SceneGraph, KeyframeStore), MapError> {
    let doc: MapDocument = serde_json::from_str(text).map_err(|e| MapError::Corrupt {
        file: "document".into(),
        line: e.line(),
        message: e.to_string(),
    })?;
    from_document(doc)
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Graphviz digraph with one rank per hierarchy level.
pub fn to_dot(graph: &SceneGraph) -> String {
    let mut s = String::from("digraph map {\n  rankdir=TB;\n  node [fontsize=10];\n");
    let rank = |s: &mut String, name: &str, nodes: Vec<(String, String, &str)>| {
        if nodes.is_empty() {
            return;
        }
        let _ = writeln!(s, "  subgraph {name} {{\n    rank=same;");
        for (id, label, shape) in nodes {
            let _ = writeln!(s, "    {} [label={}, shape={shape}];", quote(&id), quote(&label));
        }
        s.push_str("  }\n");
    };
    rank(&mut s, "floors", graph.floors().map(|f| (f.id.to_string(), format!("floor {}", f.index), "box3d")).collect());
    rank(&mut s, "rooms", graph.rooms().map(|r| (r.id.to_string(), format!("{} {}", r.id, r.label), "box")).collect());
    rank(&mut s, "areas", graph.areas().map(|a| (a.id.to_string(), format!("{} {}", a.id, a.label), "ellipse")).collect());
    rank(&mut s, "objects", graph.objects().map(|o| (o.id.to_string(), format!("{} {}", o.id, o.label), "plaintext")).collect());
    for r in graph.rooms() {
        let _ = writeln!(s, "  {} -> {};", quote(&r.floor_id.to_string()), quote(&r.id.to_string()));
    }
    for a in graph.areas() {
        let _ = writeln!(s, "  {} -> {};", quote(&a.room_id.to_string()), quote(&a.id.to_string()));
    }
    for o in graph.objects() {
        let parent = match (o.area_id, o.room_id) {
            (Some(a), _) => a.to_string(),
            (None, Some(r)) => r.to_string(),
            (None, None) => o.floor_id.to_string(),
        };
        let _ = writeln!(s, "  {} -> {};", quote(&parent), quote(&o.id.to_string()));
    }
    for e in graph.edges() {
        let _ = writeln!(
            s,
            "  {} -> {} [style=dashed, constraint=false, label={}];",
            quote(&e.src.to_string()),
            quote(&e.dst.to_string()),
            quote(e.relation.as_str())
        );
    }
    s.push_str("}\n");
    s
}
