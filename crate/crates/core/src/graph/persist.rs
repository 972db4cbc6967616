use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::keyframes::{sha256_hex, KeyframeEntry, KeyframeStore};
use super::nodes::*;
use super::scene::{GraphParts, GraphSettings, SceneGraph};
use crate::geometry::mask::{CellMask, RleMask};
use crate::ids::IdCounters;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum MapError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Corrupt { file: String, line: usize, message: String },
    #[error("{file}:{line}: embedding dimension {got} does not match map dimension {expected}")]
    DimensionMismatch { file: String, line: usize, expected: usize, got: usize },
    #[error("unsupported map format version {0}")]
    Version(u32),
    #[error("map fails validation: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub embedding_dim: usize,
    pub grid_resolution_m: f64,
    pub created_at: u64,
    #[serde(default)]
    pub known_categories: Vec<String>,
    pub revision: u64,
    #[serde(default)]
    pub update_count: u64,
    pub next_ids: IdCounters,
    /// Record count per jsonl file; catches truncation on a line boundary.
    pub counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TombstoneRecord {
    id: String,
}

/// Result of loading a map; `warnings` lists stale keyframe payloads.
#[derive(Debug)]
pub struct LoadedMap {
    pub graph: SceneGraph,
    pub store: KeyframeStore,
    pub warnings: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MapError + '_ {
    move |source| MapError::Io { path: path.to_path_buf(), source }
}

fn write_jsonl<T: Serialize>(dir: &Path, name: &str, rows: impl Iterator<Item = T>) -> Result<usize, MapError> {
    let path = dir.join(name);
    let mut buf = Vec::new();
    let mut n = 0;
    for r in rows {
        serde_json::to_writer(&mut buf, &r).expect("map records always serialize");
        buf.push(b'\n');
        n += 1;
    }
    fs::write(&path, buf).map_err(io_err(&path))?;
    Ok(n)
}

fn read_jsonl<T: DeserializeOwned>(dir: &Path, name: &str, expected: Option<usize>) -> Result<Vec<(usize, T)>, MapError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(line).map_err(|e| MapError::Corrupt {
            file: name.to_string(),
            line: k + 1,
            message: e.to_string(),
        })?;
        out.push((k + 1, row));
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(MapError::Corrupt {
            file: name.to_string(),
            line: text.lines().count(),
            message: "file is truncated (no final newline)".into(),
        });
    }
    if let Some(n) = expected {
        if n != out.len() {
            return Err(MapError::Corrupt {
                file: name.to_string(),
                line: out.len(),
                message: format!("expected {n} records, found {}", out.len()),
            });
        }
    }
    Ok(out)
}

pub fn save_map(graph: &SceneGraph, store: &KeyframeStore, dir: &Path) -> Result<(), MapError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let masks = dir.join("masks");
    if masks.exists() {
        fs::remove_dir_all(&masks).map_err(io_err(&masks))?;
    }
    fs::create_dir_all(&masks).map_err(io_err(&masks))?;

    let mut counts = BTreeMap::new();
    counts.insert("floors.jsonl".to_string(), write_jsonl(dir, "floors.jsonl", graph.floors())?);
    counts.insert("rooms.jsonl".to_string(), write_jsonl(dir, "rooms.jsonl", graph.rooms())?);
    counts.insert("areas.jsonl".to_string(), write_jsonl(dir, "areas.jsonl", graph.areas())?);
    counts.insert("objects.jsonl".to_string(), write_jsonl(dir, "objects.jsonl", graph.objects())?);
    counts.insert("edges.jsonl".to_string(), write_jsonl(dir, "edges.jsonl", graph.edges())?);
    counts.insert("keyframes.jsonl".to_string(), write_jsonl(dir, "keyframes.jsonl", store.entries())?);
    counts.insert(
        "tombstones.jsonl".to_string(),
        write_jsonl(dir, "tombstones.jsonl", graph.tombstones().iter().map(|id| TombstoneRecord { id: id.clone() }))?,
    );

    for room in graph.rooms() {
        let path = masks.join(format!("{}.rle", room.id));
        let mut line = serde_json::to_vec(&room.mask.to_rle()).expect("rle serializes");
        line.push(b'\n');
        fs::write(&path, line).map_err(io_err(&path))?;
    }

    let mut payloads = store.payloads().peekable();
    if payloads.peek().is_some() {
        let images = dir.join("images");
        fs::create_dir_all(&images).map_err(io_err(&images))?;
        for (hash, bytes) in payloads {
            let path = images.join(format!("{hash}.png"));
            if !path.exists() {
                let mut f = fs::File::create(&path).map_err(io_err(&path))?;
                f.write_all(bytes).map_err(io_err(&path))?;
            }
        }
    }

    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        embedding_dim: graph.settings.embedding_dim,
        grid_resolution_m: graph.settings.grid_resolution_m,
        created_at: graph.settings.created_at,
        known_categories: graph.settings.known_categories.clone(),
        revision: graph.revision(),
        update_count: graph.update_count(),
        next_ids: graph.id_counters().clone(),
        counts,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, MapError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| MapError::Corrupt {
        file: "manifest.json".into(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_map(dir: &Path) -> Result<LoadedMap, MapError> {
    let manifest = read_manifest(dir)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(MapError::Version(manifest.format_version));
    }
    let count = |name: &str| manifest.counts.get(name).copied();

    let floors: Vec<FloorNode> = read_jsonl(dir, "floors.jsonl", count("floors.jsonl"))?.into_iter().map(|r| r.1).collect();
    let mut rooms: Vec<RoomNode> = read_jsonl(dir, "rooms.jsonl", count("rooms.jsonl"))?.into_iter().map(|r| r.1).collect();
    let areas: Vec<AreaNode> = read_jsonl(dir, "areas.jsonl", count("areas.jsonl"))?.into_iter().map(|r| r.1).collect();
    let mut objects = Vec::new();
    for (line, o) in read_jsonl::<ObjectNode>(dir, "objects.jsonl", count("objects.jsonl"))? {
        if o.embedding.len() != manifest.embedding_dim {
            return Err(MapError::DimensionMismatch {
                file: "objects.jsonl".into(),
                line,
                expected: manifest.embedding_dim,
                got: o.embedding.len(),
            });
        }
        objects.push(o);
    }
    let edges: Vec<SpatialEdge> = read_jsonl(dir, "edges.jsonl", count("edges.jsonl"))?.into_iter().map(|r| r.1).collect();
    let tombstones: Vec<String> = read_jsonl::<TombstoneRecord>(dir, "tombstones.jsonl", count("tombstones.jsonl"))?
        .into_iter()
        .map(|r| r.1.id)
        .collect();

    for room in &mut rooms {
        let name = format!("masks/{}.rle", room.id);
        let path = dir.join(&name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let rle: RleMask = serde_json::from_str(text.trim_end()).map_err(|e| MapError::Corrupt {
            file: name.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
        room.mask = CellMask::from_rle(&rle).map_err(|message| MapError::Corrupt { file: name, line: 1, message })?;
    }

    let mut store = KeyframeStore::new();
    let mut warnings = Vec::new();
    for (_, entry) in read_jsonl::<KeyframeEntry>(dir, "keyframes.jsonl", count("keyframes.jsonl"))? {
        let path = dir.join(&entry.image_path);
        if path.exists() {
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if sha256_hex(&bytes) == entry.content_hash {
                store.attach_payload(entry.content_hash.clone(), bytes);
            } else {
                warnings.push(format!("stale keyframe {}: {} does not match its content hash", entry.id, entry.image_path));
            }
        }
        store.insert_entry(entry);
    }

    let graph = SceneGraph::from_parts(GraphParts {
        settings: GraphSettings {
            embedding_dim: manifest.embedding_dim,
            grid_resolution_m: manifest.grid_resolution_m,
            created_at: manifest.created_at,
            known_categories: manifest.known_categories,
        },
        floors,
        rooms,
        areas,
        objects,
        edges,
        revision: manifest.revision,
        updates: manifest.update_count,
        ids: manifest.next_ids,
        tombstones,
    });
    let violations = graph.validate();
    if !violations.is_empty() {
        return Err(MapError::Invalid(violations));
    }
    Ok(LoadedMap { graph, store, warnings })
}
