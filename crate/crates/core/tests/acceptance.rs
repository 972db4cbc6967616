//! End-to-end acceptance checks. Runs without the test harness and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use ikb_core::bench::{measure_storage, run_bench, BenchConfig, Variant};
use ikb_core::config::{build_providers, RunConfig};
use ikb_core::geometry::mask::{cell_of, CellMask};
use ikb_core::geometry::pose::Pose;
use ikb_core::geometry::segment::{segment_rooms, SegmentationConfig};
use ikb_core::graph::*;
use ikb_core::ids::{FloorId, KeyframeId};
use ikb_core::pipeline::{build_dir, build_map};
use ikb_core::providers::{HashEmbedder, ProviderConfig, ProviderMode, Providers, Role, StubChat};
use ikb_core::retrieval::{fuse_temporal_memory, parse_query_rules, rank, retrieve, ParserMode, RetrievalConfig, Verdict};
use ikb_core::semantic::associate::TopologyMode;
use ikb_core::semantic::{associate, AssociationConfig, Candidate};
use ikb_core::supervisor::{region_at, run_update, SupervisorMode, TriggerConfig, TriggerReason, TriggerState, UpdateConfig};
use ikb_core::synth::*;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stubs(dim: usize) -> Providers {
    Providers::stub(dim, StubChat::standard())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

fn oracle_equivalence() -> Check {
    let w = random_world(7, 1000, 2);
    let t = build_truth_graph(&w, 128, true).map_err(|e| e.to_string())?;
    let e = HashEmbedder::new(128);
    let start = Instant::now();
    let (mut n, mut mismatches) = (0, Vec::new());
    for text in random_queries(&w, 7, 160) {
        let Ok(q) = parse_query_rules(&text) else { continue };
        n += 1;
        let got: Vec<_> = rank(&t.graph, &q, &e, 5).into_iter().map(|c| c.object_id).collect();
        let want: Vec<_> = oracle_rank(&t.graph, &q, &e, 5).into_iter().map(|c| c.0).collect();
        if got != want {
            mismatches.push(text);
        }
    }
    let s = start.elapsed().as_secs_f64();
    let detail = format!("{} objects, {n} queries, {} mismatches, {s:.2} s", t.graph.object_count(), mismatches.len());
    ensure(t.graph.object_count() >= 1000 && n >= 100 && mismatches.is_empty() && s < 10.0, detail)
}

fn negation_soundness() -> Check {
    let params = WorldParams { floors: 2, rooms_per_floor: 6, ..Default::default() };
    let e = HashEmbedder::new(128);
    let (mut n, mut violations) = (0, Vec::new());
    let mut seed = 0;
    while n < 240 && seed < 200 {
        let w = generate_world(seed, &params).map_err(|e| e.to_string())?;
        seed += 1;
        let t = build_truth_graph(&w, 128, true).map_err(|e| e.to_string())?;
        let bank = generate_query_bank(&w, 12).map_err(|e| e.to_string())?;
        for qi in bank.iter().filter(|q| q.is_negation()) {
            let q = parse_query_rules(&qi.text).map_err(|e| e.to_string())?;
            let order: Vec<_> = rank(&t.graph, &q, &e, t.graph.object_count()).into_iter().map(|c| c.object_id).collect();
            let pos = |ids: &[u64]| t.graph_ids(ids).into_iter().filter_map(|id| order.iter().position(|x| *x == id)).collect::<Vec<_>>();
            let best_positive = pos(&qi.positives).into_iter().min().unwrap_or(usize::MAX);
            n += 1;
            if pos(&qi.hard_negatives).into_iter().any(|k| k < best_positive) {
                violations.push(format!("seed {} {}", w.seed, qi.text));
            }
        }
    }
    let detail = format!("{n} D1-D5 instances over {seed} worlds, {} negatives above a positive", violations.len());
    ensure(n >= 200 && violations.is_empty(), match violations.first() {
        Some(v) => format!("{detail} (first: {v})"),
        None => detail,
    })
}

/// Shared bench run: floor filtering, ablation directions and round trips.
struct Bench {
    cfg: BenchConfig,
    report: ikb_core::bench::BenchReport,
    work: tempfile::TempDir,
}

fn bench() -> Result<Bench, String> {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = BenchConfig::default();
    let mut run = RunConfig::default();
    run.write_bev = false;
    let report = run_bench(&cfg, &run, work.path()).map_err(|e| e.to_string())?;
    Ok(Bench { cfg, report, work })
}

fn hard_filter(b: &Bench) -> Check {
    let (mut queries, mut stray) = (0, 0);
    let providers = stubs(RunConfig::default().embedding_dim);
    let rcfg = RetrievalConfig { verify: false, k: 50, ..Default::default() };
    for seed in &b.cfg.seeds {
        let w = generate_world(*seed, &b.cfg.world).map_err(|e| e.to_string())?;
        let bank = generate_query_bank(&w, b.cfg.queries_per_template).map_err(|e| e.to_string())?;
        for dir in ["map", "map-no-areas"] {
            let m = load_map(&b.work.path().join(format!("seed_{seed}")).join(dir)).map_err(|e| e.to_string())?;
            for q in bank.iter().filter(|q| q.floor.is_some()) {
                let a = retrieve(&m.graph, &m.store, &q.text, &providers, &rcfg).map_err(|e| e.to_string())?;
                queries += 1;
                stray += a
                    .audit
                    .candidates
                    .iter()
                    .filter(|c| m.graph.object(c.object_id).ok().and_then(|o| m.graph.floor(o.floor_id)).map(|f| f.index) != q.floor)
                    .count();
            }
        }
    }
    let wrong = b.report.wrong_floor_answers();
    ensure(
        queries > 0 && stray == 0 && wrong == 0,
        format!("{queries} floor queries, {stray} candidates off floor, {wrong} wrong-floor bench answers"),
    )
}

fn segmentation() -> Check {
    let (mut rooms, mut good, mut partitions, mut worlds) = (0, 0, 0, 0);
    let res = 0.05;
    let seg = SegmentationConfig { door_half_width_m: 0.55, ..Default::default() };
    let mut worst = 1.0f64;
    for seed in 0..20u64 {
        let p = WorldParams { rooms_per_floor: 2 + (seed % 5) as usize, door_width_m: [0.7, 1.0], ..Default::default() };
        let w = generate_world(seed, &p).map_err(|e| e.to_string())?;
        let grid = w.truth_grid(1, FloorId(1), res);
        let masks = segment_rooms(&grid, &seg);
        worlds += 1;
        for r in &w.floors[0].rooms {
            let t = w.room_cells(r, res);
            let best = masks.iter().map(|m| m.iou(&t)).fold(0.0, f64::max);
            worst = worst.min(best);
            rooms += 1;
            good += usize::from(best >= 0.9);
        }
        let covered: usize = masks.iter().map(|m| m.count()).sum();
        let union: BTreeSet<_> = masks.iter().flat_map(|m| m.cells()).collect();
        partitions += usize::from(covered == union.len() && union == w.free_cells(1, res));
    }
    let frac = good as f64 / rooms as f64;
    ensure(
        frac >= 0.95 && partitions == worlds,
        format!("{good}/{rooms} rooms at IoU >= 0.90 (worst {worst:.3}), partition holds in {partitions}/{worlds} worlds"),
    )
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Unit vector at cosine exactly `c` to the unit vector `base`.
fn at_cosine(base: &[f64], c: f64, rng: &mut SplitMix64) -> Vec<f32> {
    let r: Vec<f64> = base.iter().map(|_| rng.gauss()).collect();
    let d: f64 = r.iter().zip(base).map(|(a, b)| a * b).sum();
    let perp = unit(r.iter().zip(base).map(|(a, b)| a - d * b).collect());
    base.iter().zip(&perp).map(|(b, p)| (c * b + (1.0 - c * c).sqrt() * p) as f32).collect()
}

fn assoc_graph(dim: usize) -> Result<SceneGraph, String> {
    let mut g = SceneGraph::new(GraphSettings { embedding_dim: dim, grid_resolution_m: 0.05, ..Default::default() });
    g.insert_floor(FloorNode { id: FloorId(1), index: 1, z_min: 0.45, z_max: 1.95, z_ref: 1.2 }).map_err(|e| e.to_string())?;
    Ok(g)
}

fn candidate(label: &str, known: bool, at: [f64; 3], half: [f64; 3], embedding: Vec<f32>) -> Candidate {
    Candidate {
        label: label.into(),
        known_category: known,
        embedding,
        description: format!("a {label}"),
        centroid: at,
        bbox3d: Aabb::around(at, half),
        floor_id: FloorId(1),
        room_id: None,
        best_view: BestViewRef { keyframe_id: KeyframeId(1), bbox2d: PixelRect { x0: 1, y0: 1, x1: 20, y1: 20 }, center_offset: 0.5 },
    }
}

fn association() -> Check {
    const DIM: usize = 64;
    let cfg = AssociationConfig::default();
    let mut rng = SplitMix64::new(5);
    let labels = ["chair", "lamp", "vase", "ornament", "plant", "box"];
    let objects: Vec<(String, bool, [f64; 3], [f64; 3], Vec<f64>)> = (0..30)
        .map(|k| {
            let at = [1.0 + 2.0 * (k % 6) as f64, 1.0 + 2.0 * (k / 6) as f64, 0.5];
            let half = [rng.range_f64(0.15, 0.4), rng.range_f64(0.15, 0.4), rng.range_f64(0.15, 0.4)];
            let base = unit((0..DIM).map(|_| rng.gauss()).collect());
            (labels[k % labels.len()].to_string(), k % 3 != 0, at, half, base)
        })
        .collect();
    let mut g = assoc_graph(DIM)?;
    // per-axis deviation so the RMS 3D displacement is 5 cm
    let s = 0.05 / 3f64.sqrt();
    for _ in 0..50 {
        for (label, known, at, half, base) in &objects {
            let p = [at[0] + s * rng.gauss(), at[1] + s * rng.gauss(), at[2] + s * rng.gauss()];
            let c = rng.range_f64(0.95, 1.0);
            associate(&mut g, &candidate(label, *known, p, *half, at_cosine(base, c, &mut rng)), &cfg).map_err(|e| e.to_string())?;
        }
    }
    let nodes = g.object_count();

    let mut unmerged = 0;
    for trial in 0..100u64 {
        let mut rng = SplitMix64::new(1000 + trial);
        let mut g = assoc_graph(DIM)?;
        let base = unit((0..DIM).map(|_| rng.gauss()).collect());
        let gap = rng.range_f64(0.3, 0.5);
        let a = [2.0, 2.0, 0.8];
        let b = [a[0] + gap, a[1], a[2]];
        let half = [0.1; 3];
        associate(&mut g, &candidate("ornament", false, a, half, base.iter().map(|x| *x as f32).collect()), &cfg)
            .map_err(|e| e.to_string())?;
        associate(&mut g, &candidate("ornament", false, b, half, at_cosine(&base, 0.5, &mut rng)), &cfg).map_err(|e| e.to_string())?;
        unmerged += usize::from(g.object_count() == 2);
    }
    ensure(
        nodes == 30 && unmerged == 100,
        format!("30 objects x 50 observations gave {nodes} nodes; decoy pairs unmerged in {unmerged}/100 trials"),
    )
}

fn event_economy() -> Check {
    let res = 0.05;
    let seg = SegmentationConfig::default();
    let (mut new_area, mut loops, mut other, mut total_rooms) = (0, 0, 0, 0);
    for seed in 0..5u64 {
        let w = generate_world(seed, &WorldParams { rooms_per_floor: 4, ..Default::default() }).map_err(|e| e.to_string())?;
        let masks = segment_rooms(&w.truth_grid(1, FloorId(1), res), &seg);
        let rooms = &w.floors[0].rooms;
        let r = rooms.len();
        total_rooms += r;
        let floor = FloorId(1);
        let mut s = TriggerState::new(TriggerConfig::default());
        let mut summarized: Vec<CellMask> = Vec::new();
        let mut t = 0.0;
        let mut last = w.interior(&rooms[0]).center();
        let (mut world_new, mut world_loops) = (0, 0);
        for _ in 0..5 {
            for room in rooms {
                let c = w.interior(room).center();
                let steps = ((c[0] - last[0]).hypot(c[1] - last[1]) / 0.1).ceil().max(1.0) as usize;
                // walk to the centre, then a small lap inside the room
                let lap = (0..40).map(|k| {
                    let a = k as f64 * std::f64::consts::TAU / 40.0;
                    [c[0] + 0.6 * a.cos(), c[1] + 0.6 * a.sin()]
                });
                let walk = (1..=steps).map(|k| {
                    let f = k as f64 / steps as f64;
                    [last[0] + f * (c[0] - last[0]), last[1] + f * (c[1] - last[1])]
                });
                for xy in walk.collect::<Vec<_>>().into_iter().chain(lap) {
                    t += 0.1;
                    let pose = Pose::looking(t, [xy[0], xy[1], 1.2], 0.0);
                    s.note_motion(floor, &pose);
                    let region = region_at(&masks, cell_of(xy[0], xy[1], res));
                    let Some(reason) = s.rules_check(floor, xy, region) else { continue };
                    match reason {
                        TriggerReason::NewArea => world_new += 1,
                        TriggerReason::LoopClosure => world_loops += 1,
                        _ => other += 1,
                    }
                    if let Some(m) = region {
                        if !summarized.contains(m) {
                            summarized.push(m.clone());
                        }
                    }
                    s.record_update(floor, Some(&pose), summarized.clone());
                }
                last = c;
            }
        }
        if world_new > r {
            return Err(format!("seed {seed}: {world_new} new-area triggers for {r} rooms"));
        }
        new_area += world_new;
        loops += world_loops;
    }
    let soft = new_area + loops + other;

    // fixpoint: a second update over the same grid changes nothing
    let w = generate_world(3, &WorldParams::default()).map_err(|e| e.to_string())?;
    let mut t = build_truth_graph(&w, 64, true).map_err(|e| e.to_string())?;
    let grid = w.truth_grid(1, FloorId(1), res);
    let (p, cfg) = (stubs(64), UpdateConfig::default());
    run_update(&mut t.graph, FloorId(1), &grid, &seg, &t.store, &p, &cfg, "first");
    let mut expected = t.graph.clone();
    run_update(&mut t.graph, FloorId(1), &grid, &seg, &t.store, &p, &cfg, "again");
    expected.note_update();
    let fixpoint = expected == t.graph;
    ensure(
        soft <= total_rooms + loops && other == 0 && fixpoint,
        format!(
            "{soft} soft triggers ({new_area} new-area, {loops} loop) over {total_rooms} rooms x 5 visits; rerun at fixpoint {}",
            if fixpoint { "unchanged" } else { "CHANGED" }
        ),
    )
}

fn ablation(b: &Bench) -> Check {
    let r = &b.report;
    let all = |_: &str| true;
    let mut worse = Vec::new();
    for seed in r.seeds() {
        let (f, n) = (r.success(Variant::Full, Some(seed), all), r.success(Variant::NoVerify, Some(seed), all));
        if f < n {
            worse.push(format!("seed {seed}: full {f:.3} < no-verify {n:.3}"));
        }
    }
    let b1 = |t: &str| t == "B1";
    let (areas, flat) = (r.success(Variant::Full, None, b1), r.success(Variant::NoAreas, None, b1));
    let detail = format!(
        "full {:.3} vs no-verify {:.3}; area queries {areas:.3} with areas vs {flat:.3} without",
        r.success(Variant::Full, None, all),
        r.success(Variant::NoVerify, None, all)
    );
    ensure(worse.is_empty() && areas >= flat, if worse.is_empty() { detail } else { format!("{detail}; {}", worse.join(", ")) })
}

fn storage() -> Check {
    let w = random_world(8, 1000, 2);
    let t = build_truth_graph(&w, 384, true).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let row = measure_storage(8, Variant::Full, &t.graph, &t.store, dir.path()).map_err(|e| e.to_string())?;
    ensure(
        row.objects >= 1000 && row.node_bytes <= 65536.0 && row.dense_records == 0,
        format!("{} objects, {:.0} bytes per node, {} dense point records", row.objects, row.node_bytes, row.dense_records),
    )
}

fn sequence(dir: &Path, seed: u64) -> Result<ikb_core::sequence::Sequence, String> {
    let w = generate_world(seed, &WorldParams::default()).map_err(|e| e.to_string())?;
    generate_sequence(&w, &TrajectoryParams { seed, ..Default::default() }, dir).map(|s| s.0).map_err(|e| e.to_string())
}

fn latency() -> Check {
    let w = random_world(9, 1000, 2);
    let t = build_truth_graph(&w, 384, true).map_err(|e| e.to_string())?;
    let providers = stubs(384);
    let cfg = RetrievalConfig::default();
    let mut times = Vec::new();
    for text in random_queries(&w, 9, 60) {
        let start = Instant::now();
        if retrieve(&t.graph, &t.store, &text, &providers, &cfg).is_ok() {
            times.push(start.elapsed().as_secs_f64() * 1000.0);
        }
    }
    let med = median(times.clone());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = sequence(dir.path(), 0)?;
    let mut run = RunConfig::default();
    run.write_bev = false;
    let start = Instant::now();
    build_map(&seq, &run, &stubs(run.embedding_dim)).map_err(|p| p.error.to_string())?;
    let build_s = start.elapsed().as_secs_f64();
    ensure(
        times.len() >= 50 && med < 50.0 && build_s < 60.0,
        format!("median retrieve {med:.2} ms over {} queries on 1000 objects; build of {} frames {build_s:.2} s", times.len(), seq.frames.len()),
    )
}

fn jsonl_files(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let p = e.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|x| x == "jsonl") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn determinism(b: &Bench) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = dir.path().join("seq");
    sequence(&seq, 1)?;
    let run = RunConfig::default();
    let mut files = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("out{k}"));
        build_dir(&seq, &out, &run, &stubs(run.embedding_dim)).map_err(|e| e.to_string())?;
        files.push(jsonl_files(&out)?);
    }
    let same = !files[0].is_empty() && files[0] == files[1];
    let rows = &b.report.storage;
    let equal = rows.iter().filter(|r| r.round_trip_equal).count();
    ensure(
        same && !rows.is_empty() && equal == rows.len(),
        format!(
            "{} jsonl files {}; round trip deep-equal on {equal}/{} bench maps",
            files[0].len(),
            if same { "byte-identical" } else { "DIFFER" },
            rows.len()
        ),
    )
}

#[cfg(feature = "http")]
fn rate_limited_chat() -> Result<String, String> {
    use std::io::{BufRead, BufReader, Read};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use ikb_core::providers::http::HttpChat;
    use ikb_core::providers::{ChatProvider, ChatRequest};

    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let url = format!("http://{}/v1", listener.local_addr().map_err(|e| e.to_string())?);
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; len];
            let _ = reader.read_exact(&mut body);
            let (status, payload) = if h.fetch_add(1, Ordering::SeqCst) < 2 {
                (429, "{}")
            } else {
                (200, r#"{"choices":[{"message":{"role":"assistant","content":"ok"}}]}"#)
            };
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    let cfg = ProviderConfig {
        mode: ProviderMode::Http,
        endpoint: Some(url),
        model: Some("m".into()),
        backoff_base_s: 0.01,
        max_retries: 3,
        timeout_s: 5.0,
        ..Default::default()
    };
    let chat = HttpChat::new(Role::Parser, cfg).map_err(|e| e.to_string())?;
    let x = chat.chat(&ChatRequest::text(Role::Parser, "sys", "hi")).map_err(|e| e.to_string())?;
    let n = hits.load(Ordering::SeqCst);
    ensure(x.reply == "ok" && x.attempts == 3 && n == 3, format!("reply after {} attempts ({n} requests)", x.attempts))
}

#[cfg(not(feature = "http"))]
fn rate_limited_chat() -> Result<String, String> {
    Err("built without the http feature".into())
}

fn provider_robustness() -> Check {
    let retry = rate_limited_chat()?;

    let mut run = RunConfig::default();
    run.write_bev = false;
    run.supervisor = SupervisorMode::Model;
    run.association.topology_mode = TopologyMode::Model;
    run.retrieval.parser = ParserMode::Model;
    for role in [Role::Parser, Role::Supervisor, Role::Relation, Role::Verifier, Role::Summarizer] {
        *run.providers.get_mut(role) = ProviderConfig {
            mode: ProviderMode::Http,
            endpoint: Some("http://127.0.0.1:9/v1".into()),
            model: Some("m".into()),
            max_retries: 1,
            backoff_base_s: 0.001,
            timeout_s: 1.0,
            ..Default::default()
        };
    }
    let providers = build_providers(&run.providers, run.embedding_dim, StubChat::standard()).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seq = sequence(dir.path(), 2)?;
    let mut built = build_map(&seq, &run, &providers).map_err(|p| format!("build crashed: {}", p.error))?;
    let label = built.graph.objects().next().map(|o| o.label.clone()).ok_or("empty map")?;
    let a = retrieve(&built.graph, &built.store, &format!("find the {label}"), &providers, &run.retrieval)
        .map_err(|e| format!("retrieve failed: {e}"))?;
    let id = a.object_id.ok_or("no answer")?;
    let unavailable = a.audit.verifications.iter().all(|v| v.verdict == Verdict::ProviderUnavailable);
    let fused = fuse_temporal_memory(&mut built.graph, id, "someone moved it", &providers, run.retrieval.max_desc_len)
        .map_err(|e| format!("fusion failed: {e}"))?;
    ensure(
        a.audit.parser == "rules" && !a.audit.verifications.is_empty() && unavailable && fused.contains("moved"),
        format!(
            "{retry}; unreachable endpoint: {} objects, {} updates, parser {}, {} verifications unavailable, fusion ok",
            built.graph.object_count(),
            built.updates.len(),
            a.audit.parser,
            a.audit.verifications.len()
        ),
    )
}

fn main() {
    let mut results = vec![
        (1, "oracle equivalence", oracle_equivalence()),
        (2, "negation soundness", negation_soundness()),
    ];
    let b = bench();
    let with_bench = |f: fn(&Bench) -> Check| match &b {
        Ok(b) => f(b),
        Err(e) => Err(format!("bench failed: {e}")),
    };
    results.push((3, "hard floor filter", with_bench(hard_filter)));
    results.push((4, "room segmentation", segmentation()));
    results.push((5, "association stability", association()));
    results.push((6, "event economy", event_economy()));
    results.push((7, "ablation direction", with_bench(ablation)));
    results.push((8, "storage contract", storage()));
    results.push((9, "stub latency", latency()));
    results.push((10, "determinism", with_bench(determinism)));
    results.push((11, "provider robustness", provider_robustness()));
    let mut out = std::io::stdout();
    let mut failed = 0;
    for (k, name, r) in &results {
        let (tag, detail) = match r {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        let _ = writeln!(out, "criterion {k:>2}: {tag}  {name}: {detail}");
    }
    let _ = writeln!(out, "{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
