use std::collections::BTreeSet;

use ikb_core::geometry::{Intrinsics, Pose};
use ikb_core::graph::*;
use ikb_core::ids::{FloorId, KeyframeId, ObjectId};
use ikb_core::providers::{Providers, StubChat};
use ikb_core::semantic::*;
use proptest::prelude::*;

const DIM: usize = 16;

fn graph() -> SceneGraph {
    let mut g = SceneGraph::new(GraphSettings { embedding_dim: DIM, grid_resolution_m: 0.05, created_at: 0, ..Default::default() });
    g.insert_floor(FloorNode { id: FloorId(1), index: 1, z_min: 0.45, z_max: 1.95, z_ref: 1.2 }).unwrap();
    g
}

/// Unit vector with cosine `c` to the first axis.
fn emb_at_cos(c: f64, axis: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; DIM];
    v[0] = c as f32;
    v[axis] = (1.0 - c * c).sqrt() as f32;
    v
}

fn view(k: u64, offset: f64) -> BestViewRef {
    BestViewRef { keyframe_id: KeyframeId(k), bbox2d: PixelRect { x0: 1, y0: 1, x1: 20, y1: 20 }, center_offset: offset }
}

fn cand(label: &str, known: bool, at: [f64; 3], half: f64, emb: Vec<f32>) -> Candidate {
    Candidate {
        label: label.into(),
        known_category: known,
        embedding: emb,
        description: format!("a {label}"),
        centroid: at,
        bbox3d: Aabb::around(at, [half; 3]),
        floor_id: FloorId(1),
        room_id: None,
        best_view: view(1, 0.5),
    }
}

#[test]
fn exact_repeat_merges() {
    let mut g = graph();
    let cfg = AssociationConfig::default();
    let c = cand("chair", true, [1.0, 1.0, 0.5], 0.3, emb_at_cos(1.0, 1));
    associate(&mut g, &c, &cfg).unwrap();
    let mut again = c.clone();
    again.embedding = emb_at_cos(0.95, 1);
    let r = associate(&mut g, &again, &cfg).unwrap();
    assert!(matches!(r, Association::Merged(MergeRecord { stage: MergeStage::Strict, .. })));
    assert_eq!(g.object_count(), 1);
}

#[test]
fn open_vocab_pollution_guard() {
    let mut g = graph();
    let cfg = AssociationConfig::default();
    associate(&mut g, &cand("ornament", false, [1.0, 1.0, 0.5], 0.1, emb_at_cos(1.0, 1)), &cfg).unwrap();
    associate(&mut g, &cand("ornament", false, [1.3, 1.0, 0.5], 0.1, emb_at_cos(0.5, 2)), &cfg).unwrap();
    assert_eq!(g.object_count(), 2);
}

#[test]
fn known_category_relaxed_merge() {
    let mut g = graph();
    let cfg = AssociationConfig::default();
    associate(&mut g, &cand("sofa", true, [1.0, 1.0, 0.4], 0.1, emb_at_cos(1.0, 1)), &cfg).unwrap();
    // no box overlap and low cosine, but same label within the relaxed radius
    let r = associate(&mut g, &cand("sofa", true, [1.5, 1.0, 0.4], 0.1, emb_at_cos(0.3, 2)), &cfg).unwrap();
    assert!(matches!(r, Association::Merged(MergeRecord { stage: MergeStage::KnownCategory, .. })));
    let far = associate(&mut g, &cand("sofa", true, [3.0, 1.0, 0.4], 0.1, emb_at_cos(0.3, 2)), &cfg).unwrap();
    assert!(matches!(far, Association::Created(_)));
}

#[test]
fn jittered_reobservations_collapse() {
    let mut g = graph();
    let cfg = AssociationConfig::default();
    let mut state = 99u64;
    let mut normal = || {
        // Box-Muller from an LCG
        let mut u = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 + 0.5) / (1u64 << 53) as f64
        };
        let (a, b) = (u(), u());
        (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    };
    for k in 0..50 {
        let at = [2.0 + 0.05 * normal(), 1.0 + 0.05 * normal(), 0.45 + 0.05 * normal()];
        let c = 0.95 + 0.05 * (k % 5) as f64 / 5.0;
        associate(&mut g, &cand("chair", true, at, 0.3, emb_at_cos(c, 1 + k % 3)), &cfg).unwrap();
    }
    assert_eq!(g.object_count(), 1);
    assert_eq!(g.objects().next().unwrap().observation_count, 50);
}

#[test]
fn best_view_rules() {
    assert_eq!(best_view_update(view(1, 0.40), view(2, 0.10)).keyframe_id, KeyframeId(2));
    assert_eq!(best_view_update(view(1, 0.30), view(2, 0.30)).keyframe_id, KeyframeId(1));
}

proptest! {
    #[test]
    fn best_view_is_running_min(offsets in proptest::collection::vec(0.0f64..1.41, 1..40)) {
        let mut cur = view(0, offsets[0]);
        for (k, o) in offsets.iter().enumerate().skip(1) {
            let next = best_view_update(cur, view(k as u64, *o));
            prop_assert!(next.center_offset <= cur.center_offset);
            cur = next;
        }
        let min = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(cur.center_offset, min);
        // ties keep the first occurrence
        let first = offsets.iter().position(|o| *o == min).unwrap();
        prop_assert_eq!(cur.keyframe_id, KeyframeId(first as u64));
    }

    #[test]
    fn merges_respect_thresholds(obs in proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0, 0.2f64..1.0, 1usize..4, any::<bool>()), 1..40)) {
        let mut g = graph();
        let cfg = AssociationConfig::default();
        for (x, y, c, axis, known) in obs {
            let label = if known { "chair" } else { "gadget" };
            let r = associate(&mut g, &cand(label, known, [x, y, 0.5], 0.25, emb_at_cos(c, axis)), &cfg).unwrap();
            if let Association::Merged(m) = r {
                match m.stage {
                    MergeStage::Strict => prop_assert!(m.cosine >= cfg.tau_vis_strict && m.iou3d >= cfg.tau_iou3d),
                    MergeStage::OpenVocabulary => prop_assert!(m.cosine >= cfg.tau_vis_open),
                    MergeStage::KnownCategory => prop_assert!(m.distance_m <= cfg.relaxed_radius_m),
                }
            }
            prop_assert!(g.validate().is_empty());
        }
    }
}

fn node(id: u64, label: &str, min: [f64; 3], max: [f64; 3]) -> ObjectNode {
    let bbox3d = Aabb::new(min, max);
    ObjectNode {
        id: ObjectId(id),
        label: label.into(),
        is_open_vocab: false,
        embedding: emb_at_cos(1.0, 1),
        description: String::new(),
        centroid: bbox3d.center(),
        bbox3d,
        room_id: None,
        area_id: None,
        floor_id: FloorId(1),
        best_view: view(1, 0.1),
        observation_count: 1,
    }
}

#[test]
fn cup_on_table() {
    let table = node(1, "table", [0.0, 0.0, 0.0], [1.2, 0.8, 0.75]);
    let cup = node(2, "cup", [0.5, 0.3, 0.77], [0.6, 0.4, 0.87]);
    let edges = geometric_topology(&[table, cup], &AssociationConfig::default());
    assert!(edges.iter().any(|e| e.src == ObjectId(2) && e.dst == ObjectId(1) && e.relation == Relation::On));
    assert!(!edges.iter().any(|e| e.src == ObjectId(1) && e.relation == Relation::On), "no reciprocal on");
}

#[test]
fn distant_chairs_unrelated() {
    let a = node(1, "chair", [0.0, 0.0, 0.0], [0.5, 0.5, 0.9]);
    let b = node(2, "chair", [3.0, 0.0, 0.0], [3.5, 0.5, 0.9]);
    assert!(geometric_topology(&[a, b], &AssociationConfig::default()).is_empty());
}

/// Brute-force reference: connected components by BFS, then the rule table
/// over every ordered pair inside a component.
fn oracle_edges(objs: &[ObjectNode], radius: f64) -> BTreeSet<(ObjectId, ObjectId, Relation)> {
    let n = objs.len();
    let mut comp = vec![usize::MAX; n];
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = s;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let d = ((objs[i].centroid[0] - objs[j].centroid[0]).powi(2) + (objs[i].centroid[1] - objs[j].centroid[1]).powi(2)).sqrt();
                if comp[j] == usize::MAX && d <= radius {
                    comp[j] = s;
                    stack.push(j);
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    for i in 0..n {
        for j in 0..n {
            if i == j || comp[i] != comp[j] {
                continue;
            }
            let (a, b) = (&objs[i].bbox3d, &objs[j].bbox3d);
            let ox = (a.max[0].min(b.max[0]) - a.min[0].max(b.min[0])).max(0.0);
            let oy = (a.max[1].min(b.max[1]) - a.min[1].max(b.min[1])).max(0.0);
            let fa = (a.max[0] - a.min[0]) * (a.max[1] - a.min[1]);
            let fb = (b.max[0] - b.min[0]) * (b.max[1] - b.min[1]);
            let overlap = ox * oy / fa.min(fb) >= 0.3;
            let gap = a.min[2] - b.max[2];
            let (si, sj) = (objs[i].id, objs[j].id);
            if overlap && (-0.05..=0.15).contains(&gap) {
                out.insert((si, sj, Relation::On));
            }
            if overlap && gap > 0.15 {
                out.insert((si, sj, Relation::Above));
                out.insert((sj, si, Relation::Below));
            }
            let dxy = ((objs[i].centroid[0] - objs[j].centroid[0]).powi(2) + (objs[i].centroid[1] - objs[j].centroid[1]).powi(2)).sqrt();
            if si < sj && dxy < 1.0 {
                out.insert((si, sj, Relation::Near));
                let oz = (a.max[2].min(b.max[2]) - a.min[2].max(b.min[2])).max(0.0);
                let h = (a.max[2] - a.min[2]).min(b.max[2] - b.min[2]);
                if oz / h >= 0.5 {
                    out.insert((si, sj, Relation::NextTo));
                }
            }
        }
    }
    out
}

#[test]
fn twelve_object_scene_matches_brute_force() {
    let objs = vec![
        node(1, "table", [0.0, 0.0, 0.0], [1.2, 0.8, 0.75]),
        node(2, "cup", [0.2, 0.2, 0.75], [0.3, 0.3, 0.85]),
        node(3, "plate", [0.6, 0.3, 0.76], [0.85, 0.55, 0.79]),
        node(4, "chair", [1.3, 0.1, 0.0], [1.8, 0.6, 0.9]),
        node(5, "chair", [-0.6, 0.1, 0.0], [-0.1, 0.6, 0.9]),
        node(6, "lamp", [0.4, 0.2, 1.8], [0.8, 0.6, 2.0]),
        node(7, "shelf", [5.0, 0.0, 0.0], [6.0, 0.4, 1.8]),
        node(8, "book", [5.2, 0.1, 1.82], [5.4, 0.3, 2.05]),
        node(9, "box", [5.5, 0.05, 0.9], [5.8, 0.35, 1.1]),
        node(10, "sofa", [2.8, 3.0, 0.0], [4.8, 3.9, 0.85]),
        node(11, "cushion", [3.0, 3.2, 0.5], [3.5, 3.7, 0.95]),
        node(12, "rug", [10.0, 10.0, 0.0], [12.0, 12.0, 0.02]),
    ];
    let cfg = AssociationConfig::default();
    let got: BTreeSet<_> = geometric_topology(&objs, &cfg).iter().map(|e| e.key()).collect();
    assert_eq!(got, oracle_edges(&objs, cfg.cluster_radius_m));
    assert!(got.contains(&(ObjectId(8), ObjectId(7), Relation::On)));
}

fn frame(dets: Vec<Detection>) -> ObservationFrame {
    ObservationFrame {
        keyframe_id: KeyframeId(3),
        floor_id: FloorId(1),
        pose: Pose::looking(0.0, [0.0, 0.0, 1.2], 0.0),
        intrinsics: Intrinsics { fx: 300.0, fy: 300.0, cx: 160.0, cy: 120.0, width: 320, height: 240 },
        detections: dets,
    }
}

#[test]
fn empty_frame_counts_zero() {
    let mut g = graph();
    let p = Providers::stub(DIM, StubChat::standard());
    let d = process_keyframe(&mut g, &frame(vec![]), &[], None, &p, &AssociationConfig::default());
    assert_eq!((d.created, d.merged, d.skipped, d.edges), (0, 0, 0, 0));
}

#[test]
fn processing_is_deterministic_and_skips_bad_depth() {
    let det = |label: &str, u: f32, d: f32, samples: usize| Detection {
        bbox2d: PixelRect { x0: (u - 10.0) as u32, y0: 110, x1: (u + 10.0) as u32, y1: 130 },
        mask: None,
        label: label.into(),
        known_category: true,
        embedding: emb_at_cos(0.9, 2),
        description: None,
        depth_samples: (0..samples).map(|k| [u + (k % 5) as f32, 118.0 + (k / 5) as f32, d]).collect(),
    };
    let dets = vec![det("chair", 100.0, 2.0, 20), det("table", 160.0, 2.2, 20), det("ghost", 200.0, 2.0, 3)];
    let p = Providers::stub(DIM, StubChat::standard());
    let run = || {
        let mut g = graph();
        let d = process_keyframe(&mut g, &frame(dets.clone()), &[], None, &p, &AssociationConfig::default());
        (g, d)
    };
    let (g1, d1) = run();
    let (g2, _) = run();
    assert_eq!(g1, g2);
    assert_eq!((d1.created, d1.skipped), (2, 1));
}
