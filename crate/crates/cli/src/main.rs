//! `ikb`: build, query, export and benchmark spatial knowledge-base maps.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use ikb_core::bench::{run_bench, BenchConfig, BenchReport};
use ikb_core::config::{build_providers, ConfigError, Resolved, RunConfig};
use ikb_core::graph::{load_map, to_dot, to_json, KeyframeStore, MapError, SceneGraph};
use ikb_core::ids::ObjectId;
use ikb_core::pipeline::{build_dir, BuildError};
use ikb_core::providers::{Providers, Role, StubChat};
use ikb_core::retrieval::{breakdown_table, fuse_temporal_memory, retrieve, ParseError};
use ikb_core::synth::{generate_query_bank, generate_sequence, generate_world, write_bundle, GroundTruth, TrajectoryParams, WorldParams};

const EXIT_SCHEMA: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_PARSE: u8 = 3;

#[derive(Parser)]
#[command(name = "ikb", version, about = "Build and query hierarchical spatial knowledge-base maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file (defaults to $IKB_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Provider mode for every role.
    #[arg(long, value_enum)]
    providers: Option<Mode>,
    /// Dotted config override, e.g. `--set association.tau_iou3d=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Stub,
    Http,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Dot,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a map directory from a recorded sequence.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Answer one query against a map.
    Query {
        #[arg(long)]
        map: PathBuf,
        text: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        verify: Option<OnOff>,
        /// Print the full answer and audit trail as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Interactive queries; `:fuse <id> <text>` folds an interaction into an object, `:quit` exits.
    Repl {
        #[arg(long)]
        map: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Export a map as one JSON document or a Graphviz digraph.
    Export {
        #[arg(long)]
        map: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build synthetic maps across seeds, run their query banks under each variant, and report.
    Bench {
        /// Number of seeds, starting at 0.
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Re-run for each value, e.g. `--sweep association.tau_vis_strict=0.7,0.8`.
        #[arg(long, value_name = "KEY=V1,V2,..")]
        sweep: Option<String>,
        /// Directory for sequences, maps and reports.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        floors: usize,
        #[arg(long, default_value_t = 3)]
        rooms: usize,
        #[arg(long, default_value_t = 600)]
        frames: usize,
        #[arg(long, default_value_t = 6)]
        queries_per_template: usize,
        /// Skip decoy injection.
        #[arg(long)]
        no_decoys: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write a synthetic world, its sequence directory and ground truth.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        floors: usize,
        #[arg(long, default_value_t = 3)]
        rooms: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
        /// RMS detection displacement in metres.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 384)]
        embedding_dim: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl std::fmt::Display) -> Self {
        Failure { code, message: message.to_string() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_SCHEMA, e)
    }
}

impl From<MapError> for Failure {
    fn from(e: MapError) -> Self {
        let code = if matches!(e, MapError::Io { .. }) { EXIT_RUNTIME } else { EXIT_SCHEMA };
        Failure::new(code, e)
    }
}

impl From<BuildError> for Failure {
    fn from(e: BuildError) -> Self {
        let code = if matches!(e, BuildError::Sequence(_)) { EXIT_SCHEMA } else { EXIT_RUNTIME };
        Failure::new(code, e)
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::new(EXIT_PARSE, e)
    }
}

fn io_fail(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(EXIT_RUNTIME, format!("{}: {e}", path.display()))
}

fn resolve(args: &ConfigArgs, extra: &[String]) -> Result<Resolved, Failure> {
    let mut overrides = Vec::new();
    if let Some(m) = args.providers {
        let mode = match m {
            Mode::Stub => "stub",
            Mode::Http => "http",
        };
        overrides.extend(Role::ALL.iter().map(|r| format!("providers.{}.mode=\"{mode}\"", r.as_str())));
    }
    overrides.extend(args.set.iter().cloned());
    overrides.extend(extra.iter().cloned());
    let env: BTreeMap<String, String> = std::env::vars().collect();
    let r = RunConfig::resolve(args.config.as_deref(), &overrides, &env)?;
    // stderr, so --json output stays machine-readable
    eprint!("{}", r.header());
    Ok(r)
}

fn providers(cfg: &RunConfig) -> Result<Providers, Failure> {
    build_providers(&cfg.providers, cfg.embedding_dim, StubChat::standard()).map_err(|e| Failure::new(EXIT_SCHEMA, e))
}

fn open_map(dir: &Path) -> Result<(SceneGraph, KeyframeStore), Failure> {
    let m = load_map(dir)?;
    for w in &m.warnings {
        log::warn!("{w}");
    }
    Ok((m.graph, m.store))
}

fn cmd_build(input: &Path, out: &Path, args: &ConfigArgs) -> Result<(), Failure> {
    let r = resolve(args, &[])?;
    let p = providers(&r.config)?;
    let o = build_dir(input, out, &r.config, &p)?;
    println!(
        "built {}: {} floors, {} rooms, {} areas, {} objects, {} edges",
        out.display(),
        o.graph.floors().count(),
        o.graph.rooms().count(),
        o.graph.areas().count(),
        o.graph.objects().count(),
        o.graph.edges().count()
    );
    println!(
        "frames {}, keyframes {}, detections created {} merged {} skipped {}, updates {}, triggers {}",
        o.stats.frames,
        o.stats.keyframes,
        o.stats.created,
        o.stats.merged,
        o.stats.skipped,
        o.updates.len(),
        o.triggers.len()
    );
    print!("{}", p.latency.report().to_table());
    Ok(())
}

fn query_overrides(k: Option<usize>, verify: Option<OnOff>) -> Vec<String> {
    let mut extra = Vec::new();
    if let Some(k) = k {
        extra.push(format!("retrieval.k={k}"));
    }
    if let Some(v) = verify {
        extra.push(format!("retrieval.verify={}", v == OnOff::On));
    }
    extra
}

fn cmd_query(map: &Path, text: &str, k: Option<usize>, verify: Option<OnOff>, json: bool, args: &ConfigArgs) -> Result<(), Failure> {
    let r = resolve(args, &query_overrides(k, verify))?;
    let p = providers(&r.config)?;
    let (graph, store) = open_map(map)?;
    let a = retrieve(&graph, &store, text, &p, &r.config.retrieval)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&a).expect("answers serialize"));
    } else {
        print!("{}", breakdown_table(&graph, &a));
    }
    Ok(())
}

fn cmd_repl(map: &Path, args: &ConfigArgs) -> Result<(), Failure> {
    let r = resolve(args, &[])?;
    let p = providers(&r.config)?;
    let (mut graph, store) = open_map(map)?;
    let stdin = std::io::stdin();
    let mut out = std::io::stdout();
    let mut line = String::new();
    loop {
        let _ = write!(out, "ikb> ");
        let _ = out.flush();
        line.clear();
        if stdin.lock().read_line(&mut line).map_err(|e| Failure::new(EXIT_RUNTIME, e))? == 0 {
            break;
        }
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if text == ":quit" || text == ":q" {
            break;
        }
        if let Some(rest) = text.strip_prefix(":fuse") {
            let rest = rest.trim();
            let (id, note) = rest.split_once(char::is_whitespace).unwrap_or((rest, ""));
            match id.parse::<ObjectId>() {
                Ok(id) => match fuse_temporal_memory(&mut graph, id, note, &p, r.config.retrieval.max_desc_len) {
                    Ok(d) => println!("{id}: {d}"),
                    Err(e) => println!("error: {e}"),
                },
                Err(e) => println!("error: {e}; usage :fuse <object id> <text>"),
            }
            continue;
        }
        if text.starts_with(':') {
            println!("commands: :fuse <id> <text>, :quit");
            continue;
        }
        match retrieve(&graph, &store, text, &p, &r.config.retrieval) {
            Ok(a) => print!("{}", breakdown_table(&graph, &a)),
            Err(e) => println!("parse error: {e}"),
        }
    }
    Ok(())
}

fn cmd_export(map: &Path, format: Format, out: Option<&Path>) -> Result<(), Failure> {
    let (graph, store) = open_map(map)?;
    let text = match format {
        Format::Json => to_json(&graph, &store),
        Format::Dot => to_dot(&graph),
    };
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_fail(path))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_report(dir: &Path, name: &str, r: &BenchReport) -> Result<String, Failure> {
    std::fs::create_dir_all(dir).map_err(io_fail(dir))?;
    let table = r.results_table();
    let json = serde_json::to_string_pretty(r).expect("reports serialize");
    for (file, body) in [(format!("{name}.txt"), &table), (format!("{name}.json"), &json), (format!("{name}.latency.txt"), &r.latency_table())] {
        let path = dir.join(file);
        std::fs::write(&path, body).map_err(io_fail(&path))?;
    }
    Ok(table)
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let bench = BenchConfig {
        seeds: (0..a.seeds).collect(),
        world: WorldParams { floors: a.floors, rooms_per_floor: a.rooms, ..Default::default() },
        trajectory: TrajectoryParams { frames: a.frames, ..Default::default() },
        queries_per_template: a.queries_per_template,
        decoys: !a.no_decoys,
        ..Default::default()
    };
    let runs: Vec<(String, Vec<String>)> = match &a.sweep {
        None => vec![("report".into(), vec![])],
        Some(s) => {
            let (key, values) =
                s.split_once('=').ok_or_else(|| Failure::new(EXIT_SCHEMA, format!("sweep `{s}` is not key=v1,v2")))?;
            values
                .split(',')
                .map(|v| (format!("{}={}", key.trim(), v.trim()), vec![format!("{}={}", key.trim(), v.trim())]))
                .collect()
        }
    };
    for (name, extra) in runs {
        let r = resolve(&a.cfg, &extra)?;
        let work = a.out.join(name.replace(['=', '/', '"'], "_"));
        info!("bench {name} in {}", work.display());
        let report = run_bench(&bench, &r.config, &work).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
        let table = write_report(&work, "report", &report)?;
        println!("== {name}");
        print!("{table}");
        println!();
        print!("{}", report.latency_table());
    }
    Ok(())
}

struct BenchArgs {
    seeds: u64,
    sweep: Option<String>,
    out: PathBuf,
    floors: usize,
    rooms: usize,
    frames: usize,
    queries_per_template: usize,
    no_decoys: bool,
    cfg: ConfigArgs,
}

fn cmd_synth(out: &Path, seed: u64, floors: usize, rooms: usize, frames: usize, noise: f64, dim: usize) -> Result<(), Failure> {
    let params = WorldParams { floors, rooms_per_floor: rooms, ..Default::default() };
    let world = generate_world(seed, &params).map_err(|e| Failure::new(EXIT_SCHEMA, e))?;
    let traj = TrajectoryParams { seed, frames, position_noise_m: noise, embedding_dim: dim, ..Default::default() };
    let (seq, identity) = generate_sequence(&world, &traj, out).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    let queries = generate_query_bank(&world, 10).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    let truth = GroundTruth::new(&world, identity, queries);
    write_bundle(out, &world, &truth).map_err(|e| Failure::new(EXIT_RUNTIME, e))?;
    println!(
        "wrote {}: {} frames, {} rooms, {} objects, {} queries",
        out.display(),
        seq.frames.len(),
        world.floors.iter().map(|f| f.rooms.len()).sum::<usize>(),
        world.objects.len(),
        truth.queries.len()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let r = match cli.cmd {
        Cmd::Build { input, out, cfg } => cmd_build(&input, &out, &cfg),
        Cmd::Query { map, text, k, verify, json, cfg } => cmd_query(&map, &text, k, verify, json, &cfg),
        Cmd::Repl { map, cfg } => cmd_repl(&map, &cfg),
        Cmd::Export { map, format, out } => cmd_export(&map, format, out.as_deref()),
        Cmd::Bench { seeds, sweep, out, floors, rooms, frames, queries_per_template, no_decoys, cfg } => {
            cmd_bench(BenchArgs { seeds, sweep, out, floors, rooms, frames, queries_per_template, no_decoys, cfg })
        }
        Cmd::Synth { out, seed, floors, rooms, frames, noise, embedding_dim } => {
            cmd_synth(&out, seed, floors, rooms, frames, noise, embedding_dim)
        }
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
