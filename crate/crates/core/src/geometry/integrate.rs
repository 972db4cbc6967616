use serde::{Deserialize, Serialize};

use super::grid::OccupancyGrid;
use super::mask::Cell;
use super::pose::{Intrinsics, Pose};
use super::GeometryError;

/// Planar range scan around the camera: ray endpoints in world (x, y),
/// ordered by bearing. `hit[k]` is true when ray `k` ended on an obstacle
/// rather than at the sensor's range limit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreespaceScan {
    pub polygon: Vec<[f64; 2]>,
    pub hit: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthImage {
    pub width: u32,
    pub height: u32,
    pub meters: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FrameHint {
    None,
    Freespace(FreespaceScan),
    Depth(DepthImage),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrationConfig {
    /// Camera height above the floor, used to tell floor returns from obstacles.
    pub camera_height_m: f64,
    pub obstacle_min_height_m: f64,
    pub obstacle_max_height_m: f64,
    pub max_range_m: f64,
    pub depth_stride: usize,
    /// Neighbouring scan rays whose ranges differ by less than this are
    /// treated as one surface and the wedge between them is filled.
    pub fill_continuity_m: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        IntegrationConfig {
            camera_height_m: 1.2,
            obstacle_min_height_m: 0.1,
            obstacle_max_height_m: 2.0,
            max_range_m: 8.0,
            depth_stride: 4,
            fill_continuity_m: 0.15,
        }
    }
}

fn line_cells(a: Cell, b: Cell) -> Vec<Cell> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x, y));
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

fn carve(grid: &mut OccupancyGrid, from: [f64; 2], to: [f64; 2], hit: bool) {
    let a = grid.cell_of(from[0], from[1]);
    let b = grid.cell_of(to[0], to[1]);
    grid.reserve(a, b);
    let cells = line_cells(a, b);
    let n = cells.len();
    for (k, c) in cells.into_iter().enumerate() {
        if hit && k + 1 == n {
            break;
        }
        grid.mark_free(c);
    }
}

/// Marks free every cell whose centre lies inside the triangle.
fn fill_triangle(grid: &mut OccupancyGrid, p: [[f64; 2]; 3]) {
    let res = grid.resolution;
    let ymin = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min);
    let ymax = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max);
    let j0 = (ymin / res - 0.5).ceil() as i32;
    let j1 = (ymax / res - 0.5).floor() as i32;
    for j in j0..=j1 {
        let yc = (j as f64 + 0.5) * res;
        let mut xs = [f64::INFINITY, f64::NEG_INFINITY];
        for e in 0..3 {
            let (a, b) = (p[e], p[(e + 1) % 3]);
            if (a[1] - yc) * (b[1] - yc) > 0.0 || a[1] == b[1] {
                continue;
            }
            let t = (yc - a[1]) / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            xs[0] = xs[0].min(x);
            xs[1] = xs[1].max(x);
        }
        if xs[0] > xs[1] {
            continue;
        }
        let i0 = (xs[0] / res - 0.5).ceil() as i32;
        let i1 = (xs[1] / res - 0.5).floor() as i32;
        for i in i0..=i1 {
            grid.mark_free((i, j));
        }
    }
}

/// Folds one observation into the floor grid: free space along every ray,
/// obstacles at ray endpoints, and the camera's own cell free.
pub fn integrate_frame(
    grid: &mut OccupancyGrid,
    pose: &Pose,
    hint: &FrameHint,
    intrinsics: Option<&Intrinsics>,
    cfg: &IntegrationConfig,
) -> Result<(), GeometryError> {
    let cam = pose.xy();
    match hint {
        FrameHint::None => return Ok(()),
        FrameHint::Freespace(scan) => {
            if scan.polygon.len() != scan.hit.len() {
                return Err(GeometryError::MalformedScan(scan.polygon.len(), scan.hit.len()));
            }
            let range = |q: &[f64; 2]| ((q[0] - cam[0]).powi(2) + (q[1] - cam[1]).powi(2)).sqrt();
            let n = scan.polygon.len();
            for k in 0..n.saturating_sub(1) {
                let (a, b) = (scan.polygon[k], scan.polygon[k + 1]);
                if (range(&a) - range(&b)).abs() < cfg.fill_continuity_m {
                    fill_triangle(grid, [cam, a, b]);
                }
            }
            for (q, hit) in scan.polygon.iter().zip(&scan.hit) {
                carve(grid, cam, *q, *hit);
            }
            for (q, hit) in scan.polygon.iter().zip(&scan.hit) {
                if *hit {
                    grid.mark_occupied(grid.cell_of(q[0], q[1]));
                }
            }
        }
        FrameHint::Depth(depth) => {
            let k = intrinsics.ok_or(GeometryError::MissingIntrinsics)?;
            if depth.width != k.width || depth.height != k.height {
                return Err(GeometryError::MismatchedIntrinsics {
                    expected: (k.width, k.height),
                    got: (depth.width, depth.height),
                });
            }
            let ground = pose.position[2] - cfg.camera_height_m;
            let stride = cfg.depth_stride.max(1);
            let mut occupied = Vec::new();
            for v in (0..depth.height).step_by(stride) {
                for u in (0..depth.width).step_by(stride) {
                    let d = depth.meters[(v * depth.width + u) as usize] as f64;
                    if !(d > 0.0) || d > cfg.max_range_m {
                        continue;
                    }
                    let p = pose.camera_to_world(k.unproject(u as f64 + 0.5, v as f64 + 0.5, d));
                    let h = p[2] - ground;
                    let obstacle = h > cfg.obstacle_min_height_m && h < cfg.obstacle_max_height_m;
                    carve(grid, cam, [p[0], p[1]], obstacle);
                    if obstacle {
                        occupied.push(grid.cell_of(p[0], p[1]));
                    }
                }
            }
            for c in occupied {
                grid.mark_occupied(c);
            }
        }
    }
    grid.force_free(grid.cell_of(cam[0], cam[1]));
    Ok(())
}
