//! Camera trajectories through a world and the observation sequences they
//! produce.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::rng::SplitMix64;
use super::world::{dist, PlacedObject, WorldSpec};
use super::SynthError;
use crate::geometry::integrate::FreespaceScan;
use crate::geometry::pose::{Intrinsics, Pose};
use crate::graph::PixelRect;
use crate::providers::{HashEmbedder, TextEmbedder};
use crate::raster::Rgb;
use crate::semantic::Detection;
use crate::sequence::{FrameRecord, ImageSize, PinholeRecord, PoseRecord, Sequence, SequenceMeta, SequenceWriter};
use crate::supervisor::bev::room_color;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryParams {
    pub seed: u64,
    /// Exact number of frames emitted.
    pub frames: usize,
    pub frame_dt_s: f64,
    pub camera_height_m: f64,
    /// In-place rotation steps at the centre of each newly entered room.
    pub spin_steps: usize,
    /// Perimeter walk inset from the walls.
    pub perimeter_inset_m: f64,
    pub scan_rays: usize,
    pub max_range_m: f64,
    pub detection_range_m: f64,
    /// RMS 3D displacement of each detection.
    pub position_noise_m: f64,
    /// Cosine between an emitted embedding and its label's clean vector.
    pub embedding_cos: f64,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    /// Yaw sectors that the global feature distinguishes.
    pub feature_sectors: usize,
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    /// Depth samples per visible box face, per side.
    pub samples_per_side: usize,
    pub min_samples: usize,
    /// Frames of vertical transit between floors.
    pub stair_frames: usize,
    /// Frames held still after arriving on a new floor.
    pub dwell_frames: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            seed: 0,
            frames: 300,
            frame_dt_s: 0.1,
            camera_height_m: 1.2,
            spin_steps: 12,
            perimeter_inset_m: 0.9,
            scan_rays: 720,
            max_range_m: 8.0,
            detection_range_m: 6.0,
            position_noise_m: 0.0,
            embedding_cos: 1.0,
            embedding_dim: 384,
            feature_dim: 32,
            feature_sectors: 8,
            image_width: 160,
            image_height: 120,
            focal_px: 80.0,
            samples_per_side: 4,
            min_samples: 10,
            stair_frames: 10,
            dwell_frames: 30,
        }
    }
}

impl TrajectoryParams {
    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics {
            fx: self.focal_px,
            fy: self.focal_px,
            cx: self.image_width as f64 / 2.0,
            cy: self.image_height as f64 / 2.0,
            width: self.image_width,
            height: self.image_height,
        }
    }
}

/// A planned camera state before resampling.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Node {
    xy: [f64; 2],
    yaw: f64,
}

fn wrap(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let mut a = a % t;
    if a > std::f64::consts::PI {
        a -= t;
    }
    if a <= -std::f64::consts::PI {
        a += t;
    }
    a
}

struct Route {
    nodes: Vec<Node>,
}

impl Route {
    fn go(&mut self, to: [f64; 2]) {
        let from = self.nodes.last().copied().unwrap_or(Node { xy: to, yaw: 0.0 });
        if dist(from.xy, to) < 1e-9 {
            return;
        }
        let yaw = (to[1] - from.xy[1]).atan2(to[0] - from.xy[0]);
        self.nodes.push(Node { xy: from.xy, yaw });
        self.nodes.push(Node { xy: to, yaw });
    }

    fn spin(&mut self, steps: usize) {
        let Some(start) = self.nodes.last().copied() else { return };
        for k in 1..=steps {
            self.nodes.push(Node { xy: start.xy, yaw: wrap(start.yaw + std::f64::consts::TAU * k as f64 / steps as f64) });
        }
    }

    fn cost(a: &Node, b: &Node) -> f64 {
        dist(a.xy, b.xy) + 0.3 * wrap(b.yaw - a.yaw).abs()
    }

    fn length(&self) -> f64 {
        self.nodes.windows(2).map(|w| Self::cost(&w[0], &w[1])).sum()
    }

    /// `n` states evenly spaced along the route's motion cost.
    fn resample(&self, n: usize) -> Vec<Node> {
        if self.nodes.len() < 2 || n == 0 {
            return vec![self.nodes.first().copied().unwrap_or(Node { xy: [0.0; 2], yaw: 0.0 }); n];
        }
        let total = self.length();
        let mut out = Vec::with_capacity(n);
        let (mut seg, mut acc) = (0usize, 0.0);
        for k in 0..n {
            let u = total * (k as f64 + 0.5) / n as f64;
            while seg + 2 < self.nodes.len() && acc + Self::cost(&self.nodes[seg], &self.nodes[seg + 1]) < u {
                acc += Self::cost(&self.nodes[seg], &self.nodes[seg + 1]);
                seg += 1;
            }
            let (a, b) = (self.nodes[seg], self.nodes[seg + 1]);
            let c = Self::cost(&a, &b);
            let t = if c > 0.0 { ((u - acc) / c).clamp(0.0, 1.0) } else { 0.0 };
            out.push(Node {
                xy: [a.xy[0] + t * (b.xy[0] - a.xy[0]), a.xy[1] + t * (b.xy[1] - a.xy[1])],
                yaw: wrap(a.yaw + t * wrap(b.yaw - a.yaw)),
            });
        }
        out
    }
}

/// Depth-first tour of one floor: each room is entered through a door,
/// spun in at its centre, walked around, and left the way it was entered.
fn floor_route(world: &WorldSpec, floor: u32, p: &TrajectoryParams) -> Route {
    let fl = world.floor(floor).expect("floor exists");
    let mut route = Route { nodes: Vec::new() };
    let Some(first) = fl.rooms.first() else { return route };
    let start = world.interior(first).center();
    route.nodes.push(Node { xy: start, yaw: 0.0 });
    let mut visited = std::collections::BTreeSet::new();
    visit(world, fl, first.id, &mut visited, &mut route, p);
    route
}

fn visit(
    world: &WorldSpec,
    fl: &super::world::FloorSpec,
    room: usize,
    visited: &mut std::collections::BTreeSet<usize>,
    route: &mut Route,
    p: &TrajectoryParams,
) {
    visited.insert(room);
    let spec = world.room(room).expect("room exists");
    let r = world.interior(spec);
    let c = r.center();
    route.go(c);
    route.spin(p.spin_steps);
    let inset = p.perimeter_inset_m.min(r.width() / 2.0 - 0.1).min(r.height() / 2.0 - 0.1).max(0.1);
    let q = r.inset(inset);
    let corners = [[q.x0, q.y0], [q.x1, q.y0], [q.x1, q.y1], [q.x0, q.y1], [q.x0, q.y0]];
    for k in corners {
        route.go(k);
    }
    route.go(c);
    for d in &fl.doors {
        let other = if d.rooms.0 == room {
            d.rooms.1
        } else if d.rooms.1 == room {
            d.rooms.0
        } else {
            continue;
        };
        if visited.contains(&other) {
            continue;
        }
        let dc = d.center();
        let here = world.interior(spec).center();
        let off = 0.6;
        let (near, far) = if d.vertical {
            let s = (here[0] - dc[0]).signum();
            ([dc[0] + s * off, dc[1]], [dc[0] - s * off, dc[1]])
        } else {
            let s = (here[1] - dc[1]).signum();
            ([dc[0], dc[1] + s * off], [dc[0], dc[1] - s * off])
        };
        route.go(near);
        route.go(far);
        visit(world, fl, other, visited, route, p);
        route.go(far);
        route.go(near);
        route.go(c);
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Distance along the ray to the first wall, if any.
fn ray_hit(o: [f64; 2], d: [f64; 2], walls: &[([f64; 2], [f64; 2])]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (a, b) in walls {
        let e = [b[0] - a[0], b[1] - a[1]];
        let den = cross(d, e);
        if den.abs() < 1e-12 {
            continue;
        }
        let ao = [a[0] - o[0], a[1] - o[1]];
        let t = cross(ao, e) / den;
        let s = cross(ao, d) / den;
        if t > 1e-9 && (-1e-9..=1.0 + 1e-9).contains(&s) && best.is_none_or(|x| t < x) {
            best = Some(t);
        }
    }
    best
}

fn segment_blocked(a: [f64; 2], b: [f64; 2], walls: &[([f64; 2], [f64; 2])]) -> bool {
    let len = dist(a, b);
    if len < 1e-9 {
        return false;
    }
    let d = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
    ray_hit(a, d, walls).is_some_and(|t| t < len - 1e-6)
}

pub fn freespace_scan(
    origin: [f64; 2],
    walls: &[([f64; 2], [f64; 2])],
    rays: usize,
    max_range: f64,
) -> FreespaceScan {
    let mut polygon = Vec::with_capacity(rays);
    let mut hit = Vec::with_capacity(rays);
    for k in 0..rays {
        let a = std::f64::consts::TAU * k as f64 / rays as f64;
        let d = [a.cos(), a.sin()];
        match ray_hit(origin, d, walls) {
            Some(t) if t <= max_range => {
                // past the wall face so the endpoint cell is the wall itself
                let t = t + 0.01;
                polygon.push([origin[0] + t * d[0], origin[1] + t * d[1]]);
                hit.push(true);
            }
            _ => {
                polygon.push([origin[0] + max_range * d[0], origin[1] + max_range * d[1]]);
                hit.push(false);
            }
        }
    }
    FreespaceScan { polygon, hit }
}

fn world_to_camera(pose: &Pose, p: [f64; 3]) -> [f64; 3] {
    let t = Vector3::new(pose.position[0], pose.position[1], pose.position[2]);
    let q = pose.rotation().inverse() * (Point3::new(p[0], p[1], p[2]) - t);
    [q.x, q.y, q.z]
}

/// Points on the box faces that face the camera (bottom face excluded).
fn visible_face_points(o: &PlacedObject, cam: [f64; 3], per_side: usize) -> Vec<[f64; 3]> {
    let h = [o.size[0] / 2.0, o.size[1] / 2.0, o.size[2] / 2.0];
    let c = o.center;
    let mut out = Vec::new();
    let faces: [(usize, f64); 5] = [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0), (2, 1.0)];
    for (axis, sign) in faces {
        let face = c[axis] + sign * h[axis];
        if (cam[axis] - face) * sign <= 0.0 {
            continue;
        }
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for i in 0..per_side {
            for j in 0..per_side {
                let fu = (i as f64 + 0.5) / per_side as f64 * 2.0 - 1.0;
                let fv = (j as f64 + 0.5) / per_side as f64 * 2.0 - 1.0;
                let mut p = c;
                p[axis] = face;
                p[u] = c[u] + fu * h[u];
                p[v] = c[v] + fv * h[v];
                out.push(p);
            }
        }
    }
    out
}

fn noisy_embedding(base: &[f32], cos: f64, rng: &mut SplitMix64) -> Vec<f32> {
    if cos >= 1.0 {
        return base.to_vec();
    }
    let mut g: Vec<f64> = (0..base.len()).map(|_| rng.gauss()).collect();
    let dot: f64 = g.iter().zip(base).map(|(a, b)| a * *b as f64).sum();
    for (x, b) in g.iter_mut().zip(base) {
        *x -= dot * *b as f64;
    }
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let s = (1.0 - cos * cos).max(0.0).sqrt();
    let v: Vec<f64> = base.iter().zip(&g).map(|(b, x)| cos * *b as f64 + s * x / n).collect();
    let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / vn) as f32).collect()
}

fn unit_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut r = SplitMix64::new(seed);
    let v: Vec<f64> = (0..dim).map(|_| r.gauss()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Global feature: a per-room direction plus a per-heading-sector direction,
/// so that gating admits frames on entering a room and on turning.
fn global_feature(room: Option<usize>, yaw: f64, p: &TrajectoryParams) -> Vec<f32> {
    let key = room.map(|r| r as u64 + 1).unwrap_or(0);
    let sectors = p.feature_sectors.max(1) as f64;
    let sector = ((wrap(yaw) + std::f64::consts::PI) / std::f64::consts::TAU * sectors).floor() as u64 % sectors as u64;
    let a = unit_vector(0xfea7_0000 ^ key, p.feature_dim);
    let b = unit_vector(0x5ec7_0000 ^ (key << 8) ^ sector, p.feature_dim);
    let v: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

/// One emitted detection and the world object behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrueDetection {
    pub object: u64,
    pub detection: Detection,
    /// Depth-ordering key used when painting.
    pub depth: f64,
}

/// Detections of every object in view, with per-detection noise.
pub fn detect(
    world: &WorldSpec,
    floor: u32,
    pose: &Pose,
    p: &TrajectoryParams,
    embedder: &HashEmbedder,
    rng: &mut SplitMix64,
) -> Vec<TrueDetection> {
    let k = p.intrinsics();
    let walls = world.walls(floor);
    let cam = pose.position;
    let mut out = Vec::new();
    for o in world.objects.iter().filter(|o| o.floor == floor) {
        if dist(o.xy(), [cam[0], cam[1]]) > p.detection_range_m || segment_blocked([cam[0], cam[1]], o.xy(), &walls) {
            continue;
        }
        let sigma = p.position_noise_m / 3f64.sqrt();
        let delta = if sigma > 0.0 { [rng.gauss() * sigma, rng.gauss() * sigma, rng.gauss() * sigma] } else { [0.0; 3] };
        let mut samples = Vec::new();
        for w in visible_face_points(o, cam, p.samples_per_side) {
            let w = [w[0] + delta[0], w[1] + delta[1], w[2] + delta[2]];
            let c = world_to_camera(pose, w);
            if c[2] < 0.1 {
                continue;
            }
            let Some(uv) = k.project(c) else { continue };
            if uv[0] < 0.0 || uv[1] < 0.0 || uv[0] >= k.width as f64 || uv[1] >= k.height as f64 {
                continue;
            }
            samples.push([uv[0] as f32, uv[1] as f32, c[2] as f32]);
        }
        if samples.len() < p.min_samples {
            continue;
        }
        let x0 = samples.iter().map(|s| s[0]).fold(f32::INFINITY, f32::min).floor().max(0.0) as u32;
        let y0 = samples.iter().map(|s| s[1]).fold(f32::INFINITY, f32::min).floor().max(0.0) as u32;
        let x1 = (samples.iter().map(|s| s[0]).fold(0.0, f32::max).floor() as u32 + 1).min(k.width);
        let y1 = (samples.iter().map(|s| s[1]).fold(0.0, f32::max).floor() as u32 + 1).min(k.height);
        let base = embedder.embed(&o.label).expect("stub embedder is total");
        let desc = o.description();
        let depth = world_to_camera(pose, o.center)[2];
        out.push(TrueDetection {
            object: o.id,
            depth,
            detection: Detection {
                bbox2d: PixelRect { x0, y0, x1, y1 },
                mask: None,
                label: o.label.clone(),
                known_category: o.known_category,
                embedding: noisy_embedding(&base, p.embedding_cos, rng),
                description: (!desc.is_empty()).then_some(desc),
                depth_samples: samples,
            },
        });
    }
    out
}

/// Flat-shaded frame: the room's color as background, detection boxes
/// painted far to near.
fn render(world: &WorldSpec, room: Option<usize>, dets: &[TrueDetection], p: &TrajectoryParams) -> Vec<u8> {
    let bg = room.map(|r| room_color(r as u64 + 1)).unwrap_or([90, 90, 90]);
    let mut img = Rgb::filled(p.image_width, p.image_height, bg);
    let mut order: Vec<&TrueDetection> = dets.iter().collect();
    order.sort_by(|a, b| b.depth.total_cmp(&a.depth).then(a.object.cmp(&b.object)));
    for d in order {
        let label = world.object(d.object).map(|o| o.label.as_str()).unwrap_or("");
        let hash = label.bytes().fold(7u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        let color = room_color(hash);
        let b = d.detection.bbox2d;
        for y in b.y0..b.y1 {
            for x in b.x0..b.x1 {
                img.set(x, y, color);
            }
        }
    }
    img.to_png()
}

/// Identity truth for one emitted detection.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionTruth {
    pub frame: usize,
    pub index: usize,
    pub object: u64,
}

/// Emits a sequence directory for `world` and returns it validated along
/// with the detection identity map.
pub fn generate_sequence(
    world: &WorldSpec,
    p: &TrajectoryParams,
    dir: &Path,
) -> Result<(Sequence, Vec<DetectionTruth>), SynthError> {
    if p.frames == 0 || p.scan_rays < 8 || p.image_width == 0 || p.image_height == 0 {
        return Err(SynthError::Infeasible("trajectory needs frames, scan rays and a non-empty image".into()));
    }
    let routes: Vec<(u32, Route)> = world.floors.iter().map(|f| (f.index, floor_route(world, f.index, p))).collect();
    let transit = (p.stair_frames + p.dwell_frames) * routes.len().saturating_sub(1);
    if p.frames <= transit + routes.len() {
        return Err(SynthError::Infeasible(format!("{} frames cannot cover {} floors", p.frames, routes.len())));
    }
    let budget = p.frames - transit;
    let total: f64 = routes.iter().map(|(_, r)| r.length().max(1e-6)).sum();
    let mut counts: Vec<usize> =
        routes.iter().map(|(_, r)| ((r.length().max(1e-6) / total) * budget as f64).floor() as usize).collect();
    let short = budget - counts.iter().sum::<usize>();
    counts[0] += short;

    enum Step {
        Observe(u32, Node),
        Transit(u32, Node, f64),
    }
    let mut steps = Vec::with_capacity(p.frames);
    for (k, ((floor, route), n)) in routes.iter().zip(&counts).enumerate() {
        if k > 0 {
            let prev = match steps.last() {
                Some(Step::Observe(f, node)) | Some(Step::Transit(f, node, _)) => (*f, *node),
                None => (*floor, route.nodes[0]),
            };
            let from_z = world.floor(prev.0).map(|f| f.z_base).unwrap_or(0.0);
            let to_z = world.floor(*floor).map(|f| f.z_base).unwrap_or(0.0);
            let arrive = route.nodes[0];
            for s in 0..p.stair_frames {
                let t = (s + 1) as f64 / p.stair_frames as f64;
                steps.push(Step::Transit(*floor, arrive, from_z + t * (to_z - from_z)));
            }
            for _ in 0..p.dwell_frames {
                steps.push(Step::Transit(*floor, arrive, to_z));
            }
        }
        for node in route.resample(*n) {
            steps.push(Step::Observe(*floor, node));
        }
    }

    let k = p.intrinsics();
    let meta = SequenceMeta {
        intrinsics: PinholeRecord { fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy },
        image_size: ImageSize { width: k.width, height: k.height },
        depth_scale: 0.001,
        seed: Some(p.seed),
    };
    let mut writer = SequenceWriter::create(dir, &meta)?;
    let embedder = HashEmbedder::new(p.embedding_dim);
    let mut rng = SplitMix64::new(p.seed ^ world.seed.rotate_left(17));
    let mut truth = Vec::new();
    let mut last_feature = global_feature(None, 0.0, p);
    let mut wall_cache: BTreeMap<u32, Vec<([f64; 2], [f64; 2])>> = BTreeMap::new();
    for (n, step) in steps.iter().enumerate() {
        let t = n as f64 * p.frame_dt_s;
        let (record_pose, hint, dets, feature, image) = match step {
            Step::Transit(_, node, z) => {
                let pose = Pose::looking(t, [node.xy[0], node.xy[1], z + p.camera_height_m], node.yaw);
                (pose, None, Vec::new(), last_feature.clone(), None)
            }
            Step::Observe(floor, node) => {
                let z = world.floor(*floor).map(|f| f.z_base).unwrap_or(0.0) + p.camera_height_m;
                let pose = Pose::looking(t, [node.xy[0], node.xy[1], z], node.yaw);
                let walls = wall_cache.entry(*floor).or_insert_with(|| world.walls(*floor));
                let scan = freespace_scan(node.xy, walls, p.scan_rays, p.max_range_m);
                let room = world.room_at(*floor, node.xy).map(|r| r.id);
                let dets = detect(world, *floor, &pose, p, &embedder, &mut rng);
                let feature = global_feature(room, node.yaw, p);
                let image = render(world, room, &dets, p);
                (pose, Some(scan), dets, feature, Some(image))
            }
        };
        last_feature = feature.clone();
        let record = FrameRecord {
            timestamp: t,
            pose: PoseRecord { position: record_pose.position, orientation: record_pose.orientation },
            image: None,
            depth: None,
            freespace: hint,
            feature: String::new(),
        };
        for (i, d) in dets.iter().enumerate() {
            truth.push(DetectionTruth { frame: n, index: i, object: d.object });
        }
        let plain: Vec<Detection> = dets.into_iter().map(|d| d.detection).collect();
        writer.push(record, &feature, image.as_deref(), &plain)?;
    }
    let seq = writer.finish()?;
    Ok((seq, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resample_hits_exact_count() {
        let mut r = Route { nodes: vec![Node { xy: [0.0, 0.0], yaw: 0.0 }] };
        r.go([3.0, 0.0]);
        r.spin(4);
        r.go([3.0, 2.0]);
        for n in [1, 7, 50] {
            assert_eq!(r.resample(n).len(), n);
        }
    }

    #[test]
    fn noisy_embedding_hits_target_cosine() {
        let e = HashEmbedder::new(64);
        let base = e.embed("chair").unwrap();
        let mut rng = SplitMix64::new(3);
        let v = noisy_embedding(&base, 0.95, &mut rng);
        let c = crate::providers::cosine(&base, &v);
        assert!((c - 0.95).abs() < 1e-4, "{c}");
    }

    #[test]
    fn ray_stops_at_wall() {
        let walls = vec![([2.0, -1.0], [2.0, 1.0])];
        assert!((ray_hit([0.0, 0.0], [1.0, 0.0], &walls).unwrap() - 2.0).abs() < 1e-9);
        assert!(ray_hit([0.0, 0.0], [-1.0, 0.0], &walls).is_none());
        assert!(segment_blocked([0.0, 0.0], [3.0, 0.0], &walls));
        assert!(!segment_blocked([0.0, 0.0], [1.0, 0.0], &walls));
    }
}
