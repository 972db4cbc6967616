use std::sync::Arc;
use std::thread;

use ikb_core::geometry::mask::CellMask;
use ikb_core::graph::*;
use ikb_core::ids::{FloorId, KeyframeId, ObjectId, RoomId};
use proptest::prelude::*;

const DIM: usize = 8;

fn settings() -> GraphSettings {
    GraphSettings { embedding_dim: DIM, grid_resolution_m: 0.05, created_at: 7, ..Default::default() }
}

fn unit(k: usize) -> Vec<f32> {
    let mut v = vec![0.0; DIM];
    v[k % DIM] = 1.0;
    v
}

fn object(graph: &SceneGraph, label: &str, at: [f64; 3]) -> ObjectNode {
    ObjectNode {
        id: ObjectId(0),
        label: label.into(),
        is_open_vocab: false,
        embedding: unit(label.len()),
        description: format!("a {label}"),
        centroid: at,
        bbox3d: Aabb::around(at, [0.2, 0.2, 0.2]),
        room_id: None,
        area_id: None,
        floor_id: graph.floors().next().unwrap().id,
        best_view: BestViewRef {
            keyframe_id: KeyframeId(1),
            bbox2d: PixelRect { x0: 10, y0: 10, x1: 50, y1: 60 },
            center_offset: 0.5,
        },
        observation_count: 1,
    }
}

fn one_floor() -> SceneGraph {
    let mut g = SceneGraph::new(settings());
    g.insert_floor(FloorNode { id: FloorId(1), index: 1, z_min: 0.45, z_max: 1.95, z_ref: 1.2 }).unwrap();
    g
}

fn rect(i0: i32, j0: i32, i1: i32, j1: i32) -> CellMask {
    CellMask::from_cells((i0..i1).flat_map(|i| (j0..j1).map(move |j| (i, j))))
}

/// Two rooms side by side, 4 m each, and a few objects with edges.
fn small_graph() -> SceneGraph {
    let mut g = one_floor();
    let r1 = g.insert_room(FloorId(1), rect(0, 0, 80, 80)).unwrap();
    let r2 = g.insert_room(FloorId(1), rect(82, 0, 162, 80)).unwrap();
    g.set_room_semantics(r1, "kitchen".into(), "cooking".into(), Some(KeyframeId(1))).unwrap();
    g.set_room_semantics(r2, "bedroom".into(), "sleeping".into(), None).unwrap();
    let a = g.insert_object(object(&g, "table", [1.0, 1.0, 0.4])).unwrap();
    let b = g.insert_object(object(&g, "cup", [1.0, 1.0, 0.8])).unwrap();
    let c = g.insert_object(object(&g, "bed", [6.0, 2.0, 0.3])).unwrap();
    g.reassign_objects_to_rooms();
    g.insert_area(r1, "dining area".into(), "table and cup".into(), vec![a, b]).unwrap();
    for (s, d, r) in [(b, a, Relation::On), (a, b, Relation::Near), (a, c, Relation::Near)] {
        g.add_edge(SpatialEdge { src: s, dst: d, relation: r, confidence: 0.9, source: EdgeSource::Geometric }).unwrap();
    }
    g
}

#[test]
fn upsert_new_and_by_id() {
    let mut g = one_floor();
    let id = g.insert_object(object(&g, "chair", [0.0, 0.0, 0.5])).unwrap();
    assert_eq!(g.object_count(), 1);
    let mut changed = g.object(id).unwrap().clone();
    changed.description = "a red chair".into();
    let rev = g.revision();
    g.upsert_object(changed).unwrap();
    assert_eq!(g.object_count(), 1);
    assert_eq!(g.object(id).unwrap().description, "a red chair");
    assert!(g.revision() > rev);
}

#[test]
fn upsert_rejects_short_embedding() {
    let mut g = one_floor();
    let mut node = object(&g, "chair", [0.0, 0.0, 0.5]);
    node.embedding = node.embedding.iter().map(|v| v * 0.5).collect();
    let err = g.insert_object(node).unwrap_err();
    assert!(err.to_string().contains("|embedding|"), "{err}");
    assert_eq!(g.object_count(), 0);
}

#[test]
fn upsert_rejects_centroid_outside_box() {
    let mut g = one_floor();
    let mut node = object(&g, "chair", [0.0, 0.0, 0.5]);
    node.centroid = [3.0, 0.0, 0.5];
    assert!(g.insert_object(node).unwrap_err().to_string().contains("bbox3d contains centroid"));
}

#[test]
fn merge_rewires_and_retires() {
    let mut g = one_floor();
    let a = g.insert_object(object(&g, "sofa", [0.0, 0.0, 0.4])).unwrap();
    let b = g.insert_object(object(&g, "sofa", [0.1, 0.0, 0.4])).unwrap();
    let others: Vec<ObjectId> =
        (0..3).map(|k| g.insert_object(object(&g, "lamp", [k as f64 + 2.0, 0.0, 0.5])).unwrap()).collect();
    for o in &others {
        g.add_edge(SpatialEdge { src: b, dst: *o, relation: Relation::Near, confidence: 0.8, source: EdgeSource::Geometric })
            .unwrap();
    }
    // one duplicate that must collapse after rewiring
    g.add_edge(SpatialEdge { src: a, dst: others[0], relation: Relation::Near, confidence: 0.5, source: EdgeSource::Geometric })
        .unwrap();
    let mut pa = g.object(a).unwrap().clone();
    pa.observation_count = 2;
    g.upsert_object(pa).unwrap();
    let mut pb = g.object(b).unwrap().clone();
    pb.observation_count = 5;
    g.upsert_object(pb.clone()).unwrap();

    let merged = MergedFields {
        centroid: [0.05, 0.0, 0.4],
        bbox3d: pb.bbox3d.union(&g.object(a).unwrap().bbox3d),
        embedding: unit(4),
        description: "a sofa".into(),
        best_view: pb.best_view,
    };
    let out = g.merge_objects(a, b, merged).unwrap();
    assert_eq!(out.observation_count, 7);
    assert!(matches!(g.object(b), Err(GraphError::UnknownId(_))));
    assert_eq!(g.edges_of(a).count(), 3);
    assert_eq!(g.edges_of(b).count(), 0);
    assert!(g.validate().is_empty(), "{:?}", g.validate());
    assert!(g.tombstones().contains(&b.to_string()));
    let next = g.insert_object(object(&g, "rug", [5.0, 5.0, 0.0])).unwrap();
    assert_ne!(next, b);
    assert!(matches!(g.merge_objects(a, a, MergedFields {
        centroid: [0.0; 3], bbox3d: out.bbox3d, embedding: unit(0), description: String::new(), best_view: out.best_view
    }), Err(GraphError::SelfMerge(_))));
}

#[test]
fn retired_id_cannot_be_upserted() {
    let mut g = one_floor();
    let a = g.insert_object(object(&g, "sofa", [0.0, 0.0, 0.4])).unwrap();
    let node = g.object(a).unwrap().clone();
    g.remove_object(a).unwrap();
    assert!(matches!(g.upsert_object(node), Err(GraphError::Retired(_))));
}

#[test]
fn reassignment_matches_point_in_mask() {
    let mut g = one_floor();
    // three rooms of 3 m with 0.5 m gaps between them
    let rooms: Vec<(RoomId, CellMask)> = (0..3)
        .map(|k| {
            let m = rect(k * 70, 0, k * 70 + 60, 60);
            (g.insert_room(FloorId(1), m.clone()).unwrap(), m)
        })
        .collect();
    let mut state = 17u64;
    let mut ids = Vec::new();
    for _ in 0..20 {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let x = (state >> 33) as f64 / (1u64 << 31) as f64 * 10.5;
        let y = ((state >> 12) & 0xffff) as f64 / 65536.0 * 3.0;
        ids.push(g.insert_object(object(&g, "box", [x, y, 0.3])).unwrap());
    }
    g.reassign_objects_to_rooms();
    for id in ids {
        let o = g.object(id).unwrap();
        let cell = ((o.centroid[0] / 0.05).floor() as i32, (o.centroid[1] / 0.05).floor() as i32);
        let expected = rooms.iter().find(|(_, m)| m.contains(cell)).map(|(r, _)| *r);
        assert_eq!(o.room_id, expected, "object at {:?}", o.centroid);
    }
}

#[test]
fn object_between_rooms_becomes_unassigned() {
    let mut g = small_graph();
    let lamp = g.insert_object(object(&g, "lamp", [4.05, 1.0, 0.3])).unwrap();
    g.reassign_objects_to_rooms();
    assert_eq!(g.object(lamp).unwrap().room_id, None);
}

#[test]
fn empty_graph_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = SceneGraph::new(settings());
    save_map(&g, &KeyframeStore::new(), dir.path()).unwrap();
    let back = load_map(dir.path()).unwrap();
    assert_eq!(back.graph, g);
    assert!(back.warnings.is_empty());
}

#[test]
fn small_graph_round_trip_with_images() {
    let dir = tempfile::tempdir().unwrap();
    let g = small_graph();
    let mut store = KeyframeStore::new();
    store.insert(KeyframeId(1), ikb_core::geometry::Pose::looking(0.5, [1.0, 2.0, 1.2], 0.3), 64, 48, vec![9, 8, 7]);
    save_map(&g, &store, dir.path()).unwrap();
    let back = load_map(dir.path()).unwrap();
    assert_eq!(back.graph, g);
    assert_eq!(back.store, store);
    assert_eq!(back.graph.revision(), g.revision());
    assert!(dir.path().join("masks").join("r1.rle").exists());
}

#[test]
fn stale_image_reported() {
    let dir = tempfile::tempdir().unwrap();
    let g = small_graph();
    let mut store = KeyframeStore::new();
    let e = store.insert(KeyframeId(1), ikb_core::geometry::Pose::looking(0.0, [0.0; 3], 0.0), 8, 8, vec![1, 2, 3]).clone();
    save_map(&g, &store, dir.path()).unwrap();
    std::fs::write(dir.path().join(&e.image_path), b"tampered").unwrap();
    let back = load_map(dir.path()).unwrap();
    assert_eq!(back.warnings.len(), 1);
    assert!(back.warnings[0].contains("k1"));
}

#[test]
fn truncated_file_names_file() {
    let dir = tempfile::tempdir().unwrap();
    save_map(&small_graph(), &KeyframeStore::new(), dir.path()).unwrap();
    let path = dir.path().join("objects.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, &text[..text.len() / 2]).unwrap();
    let err = load_map(dir.path()).unwrap_err().to_string();
    assert!(err.contains("objects.jsonl"), "{err}");
}

#[test]
fn dimension_mismatch_is_load_error() {
    let dir = tempfile::tempdir().unwrap();
    save_map(&small_graph(), &KeyframeStore::new(), dir.path()).unwrap();
    let path = dir.path().join("manifest.json");
    let text = std::fs::read_to_string(&path).unwrap().replace("\"embedding_dim\": 8", "\"embedding_dim\": 16");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(load_map(dir.path()), Err(MapError::DimensionMismatch { .. })));
}

#[test]
fn snapshot_isolated_from_writes() {
    let shared = SharedGraph::new(one_floor());
    let before = shared.snapshot();
    shared.write(|g| g.insert_object(object(g, "chair", [0.0, 0.0, 0.5])).unwrap());
    assert_eq!(before.object_count(), 0);
    let s1 = shared.snapshot();
    let s2 = shared.snapshot();
    assert_eq!(s1.revision(), s2.revision());
}

#[test]
fn snapshots_never_torn() {
    let shared = Arc::new(SharedGraph::new(one_floor()));
    let base = shared.snapshot().revision();
    let writer = {
        let shared = shared.clone();
        thread::spawn(move || {
            for k in 0..100 {
                shared.write(|g| g.insert_object(object(g, "chair", [k as f64, 0.0, 0.5])).unwrap());
            }
        })
    };
    let mut seen = 0;
    while seen < 100 {
        let s = shared.snapshot();
        seen = s.object_count();
        // every insert bumps the revision exactly once
        assert_eq!(s.revision() - base, seen as u64);
        assert!(s.validate().is_empty());
    }
    writer.join().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn integrity_after_random_ops(ops in proptest::collection::vec((0u8..4, 0usize..12, 0usize..12), 1..60)) {
        let mut g = small_graph();
        for (op, a, b) in ops {
            let ids: Vec<ObjectId> = g.objects().map(|o| o.id).collect();
            let pick = |k: usize| ids.get(k % ids.len().max(1)).copied();
            match op {
                0 => { g.insert_object(object(&g, "vase", [a as f64 * 0.7, b as f64 * 0.3, 0.5])).unwrap(); }
                1 => if let (Some(x), Some(y)) = (pick(a), pick(b)) {
                    if x != y {
                        let ox = g.object(x).unwrap().clone();
                        let oy = g.object(y).unwrap().clone();
                        g.merge_objects(x, y, MergedFields {
                            centroid: ox.centroid,
                            bbox3d: ox.bbox3d.union(&oy.bbox3d),
                            embedding: ox.embedding.clone(),
                            description: ox.description.clone(),
                            best_view: ox.best_view,
                        }).unwrap();
                    }
                },
                2 => { g.reassign_objects_to_rooms(); }
                _ => if let (Some(x), Some(y)) = (pick(a), pick(b)) {
                    if x != y {
                        g.add_edge(SpatialEdge { src: x, dst: y, relation: Relation::Near, confidence: 0.7, source: EdgeSource::Model }).unwrap();
                    }
                },
            }
            prop_assert!(g.validate().is_empty(), "{:?}", g.validate());
        }
    }
}
