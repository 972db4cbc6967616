use std::path::Path;

use ikb_core::config::RunConfig;
use ikb_core::graph::persist::load_map;
use ikb_core::pipeline::{build_dir, build_map, BuildError, ResumeMarker, RESUME_FILE, UPDATES_FILE};
use ikb_core::providers::{Providers, StubChat};
use ikb_core::sequence::{encode_feature, Sequence};
use ikb_core::synth::*;

fn stub() -> Providers {
    Providers::stub(384, StubChat::standard())
}

fn world(seed: u64) -> WorldSpec {
    generate_world(seed, &WorldParams::default()).unwrap()
}

fn sequence(w: &WorldSpec, dir: &Path) -> Sequence {
    generate_sequence(w, &TrajectoryParams::default(), dir).unwrap().0
}

#[test]
fn three_room_sequence_gives_three_true_rooms() {
    let w = world(0);
    let dir = tempfile::tempdir().unwrap();
    let seq = sequence(&w, dir.path());
    let o = build_map(&seq, &RunConfig::default(), &stub()).unwrap();
    let rooms: Vec<_> = o.graph.rooms().collect();
    assert_eq!(rooms.len(), 3);
    for r in &w.floors[0].rooms {
        let truth = w.room_cells(r, 0.05);
        let best = rooms.iter().map(|m| m.mask.iou(&truth)).fold(0.0, f64::max);
        assert!(best >= 0.9, "room {} best IoU {best}", r.id);
    }
    assert!(o.graph.validate().is_empty(), "{:?}", o.graph.validate());
    assert_eq!(o.updates.last().unwrap().reason, "final");
}

/// Share of true objects claimed by exactly one same-label node within
/// 0.75 m, over several worlds.
#[test]
fn object_inventory_matches_truth() {
    let (mut good, mut total) = (0usize, 0usize);
    for seed in 0..6 {
        let w = world(seed);
        let dir = tempfile::tempdir().unwrap();
        let o = build_map(&sequence(&w, dir.path()), &RunConfig::default(), &stub()).unwrap();
        for t in &w.objects {
            let hits = o
                .graph
                .objects()
                .filter(|n| n.label == t.label && n.floor_id.0 == t.floor as u64)
                .filter(|n| ((n.centroid[0] - t.center[0]).powi(2) + (n.centroid[1] - t.center[1]).powi(2)).sqrt() < 0.75)
                .count();
            good += (hits == 1) as usize;
            total += 1;
        }
    }
    let share = good as f64 / total as f64;
    assert!(share >= 0.95, "identity agreement {share:.3} ({good}/{total})");
}

fn jsonl_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().to_string(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn rebuilds_are_byte_identical() {
    let w = world(3);
    let (input, a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    sequence(&w, input.path());
    build_dir(input.path(), a.path(), &RunConfig::default(), &stub()).unwrap();
    let tight = RunConfig { queue_capacity: 1, ..Default::default() };
    build_dir(input.path(), b.path(), &tight, &stub()).unwrap();
    let (fa, fb) = (jsonl_files(a.path()), jsonl_files(b.path()));
    assert!(fa.iter().any(|(n, _)| n == UPDATES_FILE));
    assert!(fa.iter().any(|(n, _)| n == "objects.jsonl"));
    assert_eq!(fa, fb);
    let loaded = load_map(a.path()).unwrap();
    assert!(loaded.graph.objects().count() > 0);
    assert!(a.path().join("bev").read_dir().unwrap().count() >= 1);
    assert!(!a.path().join(RESUME_FILE).exists());
}

#[test]
fn empty_frames_file_is_a_schema_error() {
    let w = world(1);
    let dir = tempfile::tempdir().unwrap();
    sequence(&w, dir.path());
    std::fs::write(dir.path().join("frames.jsonl"), "").unwrap();
    let out = tempfile::tempdir().unwrap();
    let e = build_dir(dir.path(), out.path(), &RunConfig::default(), &stub()).unwrap_err();
    assert!(e.is_schema(), "{e}");
    assert!(e.to_string().contains("frames.jsonl"));
}

#[test]
fn runtime_failure_keeps_a_partial_map() {
    let w = world(2);
    let dir = tempfile::tempdir().unwrap();
    let seq = sequence(&w, dir.path());
    // a zero global feature is rejected by the keyframe gate
    let bad = &seq.frames[150].feature;
    std::fs::write(dir.path().join(bad), encode_feature(&[0.0; 32])).unwrap();
    let out = tempfile::tempdir().unwrap();
    let e = build_dir(dir.path(), out.path(), &RunConfig::default(), &stub()).unwrap_err();
    assert!(matches!(e, BuildError::Geometry { frame: 150, .. }), "{e}");
    let marker: ResumeMarker =
        serde_json::from_str(&std::fs::read_to_string(out.path().join(RESUME_FILE)).unwrap()).unwrap();
    assert_eq!(marker.frame, 150);
    let partial = load_map(out.path()).unwrap();
    assert!(partial.graph.objects().count() > 0);
}
