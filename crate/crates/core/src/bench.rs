//! Desk-scale benchmark: build maps from synthetic sequences, answer each
//! world's query bank under several variants, and report success,
//! latency and storage.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Stopwatch;
use crate::config::RunConfig;
use crate::graph::persist::{load_map, save_map, MapError};
use crate::graph::{KeyframeStore, SceneGraph, SpatialEdge};
use crate::ids::ObjectId;
use crate::pipeline::{build_map, BuildError};
use crate::providers::{Providers, Role, StubChat};
use crate::retrieval::{parse_query_rules, retrieve, ConstraintKind, RetrievalConfig};
use crate::synth::{generate_query_bank, generate_sequence, generate_world, OracleVerifier, QueryInstance, SynthError, TrajectoryParams, WorldParams, WorldSpec};
use crate::text::content_tokens;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("seed {seed}: {source}")]
    Build {
        seed: u64,
        #[source]
        source: BuildError,
    },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Full,
    NoVerify,
    NoAreas,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoVerify, Variant::NoAreas];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoVerify => "no-verify",
            Variant::NoAreas => "no-areas",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seeds: Vec<u64>,
    pub world: WorldParams,
    pub trajectory: TrajectoryParams,
    /// Bank instances kept per template and world.
    pub queries_per_template: usize,
    /// Plant one decoy per query that outscores the true answer.
    pub decoys: bool,
    /// A map node stands for a world object when it has the same label, is
    /// on the same floor and lies within this horizontal distance.
    pub match_radius_m: f64,
    pub variants: Vec<Variant>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seeds: (0..5).collect(),
            world: WorldParams { floors: 2, ..Default::default() },
            trajectory: TrajectoryParams { frames: 600, ..Default::default() },
            queries_per_template: 6,
            decoys: true,
            match_radius_m: 0.75,
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub seed: u64,
    pub variant: Variant,
    pub query_id: String,
    pub template: String,
    pub text: String,
    pub answer: Option<ObjectId>,
    pub success: bool,
    /// The query names a floor and the answer is on another one.
    pub wrong_floor: bool,
    pub decoy: Option<ObjectId>,
    #[serde(skip)]
    pub latency_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StorageRow {
    pub seed: u64,
    /// `full` for the map shared by the full and no-verify variants.
    pub variant: Variant,
    pub objects: usize,
    /// Serialized embedding bytes per object.
    pub feat_bytes: f64,
    /// Image payload bytes per object (the shared store, amortized).
    pub img_bytes: f64,
    /// Label and description bytes per object.
    pub txt_bytes: f64,
    /// Serialized object record bytes per object, images excluded.
    pub node_bytes: f64,
    /// All map files except images.
    pub map_bytes: u64,
    pub image_store_bytes: u64,
    pub dense_records: usize,
    pub round_trip_equal: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub outcomes: Vec<QueryOutcome>,
    pub storage: Vec<StorageRow>,
}

/// World objects whose label, floor and position a node matches.
pub fn map_to_truth(world: &WorldSpec, graph: &SceneGraph, radius: f64) -> BTreeMap<u64, ObjectId> {
    let mut out = BTreeMap::new();
    for o in &world.objects {
        let best = graph
            .objects()
            .filter(|n| n.label == o.label && graph.floor(n.floor_id).map(|f| f.index) == Some(o.floor))
            .map(|n| (((n.centroid[0] - o.center[0]).powi(2) + (n.centroid[1] - o.center[1]).powi(2)).sqrt(), n.id))
            .filter(|(d, _)| *d <= radius)
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, id)) = best {
            out.insert(o.id, id);
        }
    }
    out
}

/// Copies `of` into a new node that carries only the query's own target
/// words, so it outscores `of` on every positive target term while sharing
/// its room, area and edges. Returns the decoy's id.
pub fn plant_decoy(graph: &mut SceneGraph, of: ObjectId, query: &str) -> Option<ObjectId> {
    let q = parse_query_rules(query).ok()?;
    let src = graph.object(of).ok()?.clone();
    let label: BTreeSet<String> = content_tokens(&src.label).into_iter().collect();
    let mut words: Vec<String> = Vec::new();
    for c in q.constraints.iter().filter(|c| c.of.is_none() && c.polarity > 0) {
        if matches!(c.kind, ConstraintKind::TargetAttribute | ConstraintKind::Description) {
            for t in content_tokens(&c.text) {
                if !label.contains(&t) && !words.contains(&t) {
                    words.push(t);
                }
            }
        }
    }
    let mut node = src.clone();
    node.description = words.join(" ");
    node.observation_count = 1;
    let id = graph.insert_object(node).ok()?;
    let edges: Vec<SpatialEdge> = graph.edges().filter(|e| e.touches(of)).cloned().collect();
    for e in edges {
        let mut d = e;
        if d.src == of {
            d.src = id;
        }
        if d.dst == of {
            d.dst = id;
        }
        let _ = graph.add_edge(d.canonical());
    }
    Some(id)
}

fn dir_bytes(dir: &Path, skip: &str) -> u64 {
    let mut total = 0;
    let Ok(rd) = std::fs::read_dir(dir) else { return 0 };
    for e in rd.flatten() {
        let p = e.path();
        if p.is_dir() {
            if p.file_name().is_some_and(|n| n == skip) {
                continue;
            }
            total += dir_bytes(&p, skip);
        } else if let Ok(m) = p.metadata() {
            total += m.len();
        }
    }
    total
}

const DENSE_KEYS: &[&str] = &["points", "point_cloud", "pointcloud", "voxels", "depth_samples", "vertices"];

fn is_dense(v: &serde_json::Value) -> bool {
    match v {
        serde_json::Value::Object(m) => m.iter().any(|(k, x)| DENSE_KEYS.contains(&k.as_str()) || is_dense(x)),
        serde_json::Value::Array(a) => {
            let triples = a.iter().filter(|x| x.as_array().is_some_and(|t| t.len() == 3 && t.iter().all(|n| n.is_number()))).count();
            triples > 8 || a.iter().any(is_dense)
        }
        _ => false,
    }
}

/// Records in a map's jsonl files that look like per-point geometry.
pub fn dense_point_records(dir: &Path) -> Result<usize, BenchError> {
    let mut n = 0;
    let rd = std::fs::read_dir(dir).map_err(|source| BenchError::Io { path: dir.to_path_buf(), source })?;
    for e in rd.flatten() {
        let p = e.path();
        if p.extension().is_none_or(|x| x != "jsonl") {
            continue;
        }
        let text = std::fs::read_to_string(&p).map_err(|source| BenchError::Io { path: p.clone(), source })?;
        n += text
            .lines()
            .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
            .filter(is_dense)
            .count();
    }
    Ok(n)
}

/// Saves a map into `dir` and measures it.
pub fn measure_storage(seed: u64, variant: Variant, graph: &SceneGraph, store: &KeyframeStore, dir: &Path) -> Result<StorageRow, BenchError> {
    save_map(graph, store, dir)?;
    let n = graph.objects().count();
    let per = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    let feat: usize = graph.objects().map(|o| serde_json::to_string(&o.embedding).map(|s| s.len()).unwrap_or(0)).sum();
    let txt: usize = graph.objects().map(|o| o.label.len() + o.description.len()).sum();
    let objects_file = dir.join("objects.jsonl");
    let node = std::fs::metadata(&objects_file).map_err(|source| BenchError::Io { path: objects_file, source })?.len();
    let images = dir_bytes(&dir.join("images"), "");
    let loaded = load_map(dir)?;
    Ok(StorageRow {
        seed,
        variant,
        objects: n,
        feat_bytes: per(feat as f64),
        img_bytes: per(images as f64),
        txt_bytes: per(txt as f64),
        node_bytes: per(node as f64),
        map_bytes: dir_bytes(dir, "images"),
        image_store_bytes: images,
        dense_records: dense_point_records(dir)?,
        round_trip_equal: loaded.graph == *graph && loaded.store.entries().eq(store.entries()),
    })
}

fn providers_for(dim: usize, bank: &[QueryInstance], truth: &BTreeMap<u64, ObjectId>) -> Providers {
    let mut oracle = OracleVerifier::new();
    for q in bank {
        oracle.allow(&q.text, q.positives.iter().filter_map(|p| truth.get(p).copied()));
    }
    Providers::stub(dim, StubChat::standard().with_responder(Role::Verifier, oracle.into_responder()))
}

fn answer(
    seed: u64,
    variant: Variant,
    q: &QueryInstance,
    graph: &SceneGraph,
    store: &KeyframeStore,
    truth: &BTreeMap<u64, ObjectId>,
    providers: &Providers,
    rcfg: &RetrievalConfig,
    decoys: bool,
) -> QueryOutcome {
    let positives: BTreeSet<ObjectId> = q.positives.iter().filter_map(|p| truth.get(p).copied()).collect();
    let mut g = graph.clone();
    let decoy = if decoys { positives.first().and_then(|p| plant_decoy(&mut g, *p, &q.text)) } else { None };
    let sw = Stopwatch::start();
    let a = retrieve(&g, store, &q.text, providers, rcfg).ok();
    let latency_ms = sw.elapsed_ms();
    let id = a.as_ref().and_then(|a| a.object_id);
    let wrong_floor = match (q.floor, id.and_then(|i| g.object(i).ok())) {
        (Some(want), Some(o)) => g.floor(o.floor_id).map(|f| f.index) != Some(want),
        _ => false,
    };
    QueryOutcome {
        seed,
        variant,
        query_id: q.id.clone(),
        template: q.template.clone(),
        text: q.text.clone(),
        answer: id,
        success: id.is_some_and(|i| positives.contains(&i)),
        wrong_floor,
        decoy,
        latency_ms,
    }
}

/// One seed: world, sequence, the maps each variant needs, and answers.
pub fn bench_seed(seed: u64, cfg: &BenchConfig, run: &RunConfig, work: &Path) -> Result<(Vec<QueryOutcome>, Vec<StorageRow>), BenchError> {
    let world = generate_world(seed, &cfg.world)?;
    let seq_dir = work.join(format!("seed_{seed}")).join("sequence");
    let traj = TrajectoryParams { seed, embedding_dim: run.embedding_dim, ..cfg.trajectory.clone() };
    let (seq, _) = generate_sequence(&world, &traj, &seq_dir)?;
    let bank: Vec<QueryInstance> =
        generate_query_bank(&world, cfg.queries_per_template)?.into_iter().filter(|q| !q.manual_eval).collect();

    let pipeline_providers = Providers::stub(run.embedding_dim, StubChat::standard());
    let build = |build_areas: bool| {
        let mut rc = run.clone();
        rc.update.build_areas = build_areas;
        build_map(&seq, &rc, &pipeline_providers).map_err(|p| BenchError::Build { seed, source: p.error })
    };
    let full = build(true)?;
    let no_areas = if cfg.variants.contains(&Variant::NoAreas) { Some(build(false)?) } else { None };
    let base = work.join(format!("seed_{seed}"));
    let mut storage = vec![measure_storage(seed, Variant::Full, &full.graph, &full.store, &base.join("map"))?];
    if let Some(o) = &no_areas {
        storage.push(measure_storage(seed, Variant::NoAreas, &o.graph, &o.store, &base.join("map-no-areas"))?);
    }

    let mut out = Vec::new();
    for v in &cfg.variants {
        let o = match v {
            Variant::NoAreas => no_areas.as_ref().expect("built when requested"),
            _ => &full,
        };
        let truth = map_to_truth(&world, &o.graph, cfg.match_radius_m);
        let providers = providers_for(run.embedding_dim, &bank, &truth);
        let rcfg = RetrievalConfig { verify: *v != Variant::NoVerify, ..run.retrieval.clone() };
        for q in &bank {
            out.push(answer(seed, *v, q, &o.graph, &o.store, &truth, &providers, &rcfg, cfg.decoys));
        }
    }
    Ok((out, storage))
}

pub fn run_bench(cfg: &BenchConfig, run: &RunConfig, work: &Path) -> Result<BenchReport, BenchError> {
    let mut report = BenchReport::default();
    for &seed in &cfg.seeds {
        let (o, s) = bench_seed(seed, cfg, run, work)?;
        report.outcomes.extend(o);
        report.storage.extend(s);
    }
    Ok(report)
}

fn rate(xs: &[&QueryOutcome]) -> (usize, usize, f64) {
    let ok = xs.iter().filter(|o| o.success).count();
    (ok, xs.len(), if xs.is_empty() { 0.0 } else { ok as f64 / xs.len() as f64 })
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k = ((sorted.len() as f64 - 1.0) * p).round() as usize;
    sorted[k]
}

impl BenchReport {
    pub fn variants(&self) -> Vec<Variant> {
        let s: BTreeSet<Variant> = self.outcomes.iter().map(|o| o.variant).collect();
        s.into_iter().collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        let s: BTreeSet<u64> = self.outcomes.iter().map(|o| o.seed).collect();
        s.into_iter().collect()
    }

    /// Success rate of `variant`, optionally restricted to one seed and to
    /// templates accepted by `keep`.
    pub fn success(&self, variant: Variant, seed: Option<u64>, keep: impl Fn(&str) -> bool) -> f64 {
        let xs: Vec<&QueryOutcome> = self
            .outcomes
            .iter()
            .filter(|o| o.variant == variant && seed.is_none_or(|s| o.seed == s) && keep(&o.template))
            .collect();
        rate(&xs).2
    }

    pub fn wrong_floor_answers(&self) -> usize {
        self.outcomes.iter().filter(|o| o.wrong_floor).count()
    }

    /// Success per variant, per template and per seed, plus storage.
    /// Contains no timings, so repeated stub runs print identical text.
    pub fn results_table(&self) -> String {
        let mut s = String::new();
        let templates: BTreeSet<&str> = self.outcomes.iter().map(|o| o.template.as_str()).collect();
        let _ = writeln!(s, "success rate by variant");
        let _ = write!(s, "{:<10} {:>8}", "variant", "all");
        for t in &templates {
            let _ = write!(s, " {t:>6}");
        }
        let _ = writeln!(s);
        for v in self.variants() {
            let all: Vec<&QueryOutcome> = self.outcomes.iter().filter(|o| o.variant == v).collect();
            let (ok, n, r) = rate(&all);
            let _ = write!(s, "{:<10} {:>7.1}%", v.as_str(), 100.0 * r);
            for t in &templates {
                let xs: Vec<&QueryOutcome> = all.iter().copied().filter(|o| o.template == *t).collect();
                let _ = write!(s, " {:>5.0}%", 100.0 * rate(&xs).2);
            }
            let _ = writeln!(s, "   ({ok}/{n})");
        }
        let _ = writeln!(s, "\nsuccess rate by seed");
        for seed in self.seeds() {
            let _ = write!(s, "seed {seed:<5}");
            for v in self.variants() {
                let _ = write!(s, " {}={:.1}%", v.as_str(), 100.0 * self.success(v, Some(seed), |_| true));
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "\nwrong-floor answers: {}", self.wrong_floor_answers());
        s.push('\n');
        s.push_str(&self.storage_table());
        s
    }

    pub fn storage_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "storage per object (bytes) and per map");
        let _ = writeln!(
            s,
            "{:<6} {:<10} {:>7} {:>9} {:>9} {:>8} {:>9} {:>10} {:>8} {:>10}",
            "seed", "variant", "objects", "feat", "img", "txt", "node", "map", "dense", "roundtrip"
        );
        for r in &self.storage {
            let _ = writeln!(
                s,
                "{:<6} {:<10} {:>7} {:>9.0} {:>9.0} {:>8.0} {:>9.0} {:>10} {:>8} {:>10}",
                r.seed,
                r.variant.as_str(),
                r.objects,
                r.feat_bytes,
                r.img_bytes,
                r.txt_bytes,
                r.node_bytes,
                r.map_bytes,
                r.dense_records,
                if r.round_trip_equal { "equal" } else { "DIFFERS" }
            );
        }
        s
    }

    /// Retrieval wall-clock per variant. Varies run to run.
    pub fn latency_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>8} {:>10} {:>10} {:>10}", "variant", "queries", "mean ms", "median ms", "p95 ms");
        for v in self.variants() {
            let mut xs: Vec<f64> = self.outcomes.iter().filter(|o| o.variant == v).map(|o| o.latency_ms).collect();
            xs.sort_by(f64::total_cmp);
            let mean = if xs.is_empty() { 0.0 } else { xs.iter().sum::<f64>() / xs.len() as f64 };
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>10.3} {:>10.3} {:>10.3}",
                v.as_str(),
                xs.len(),
                mean,
                percentile(&xs, 0.5),
                percentile(&xs, 0.95)
            );
        }
        s
    }
}
