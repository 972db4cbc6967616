use crate::geometry::grid::{Occupancy, OccupancyGrid};
use crate::geometry::mask::CellMask;
use crate::raster::Rgb;

use super::triggers::{TriggerState, UpdatePoint};

pub const UNKNOWN_GRAY: [u8; 3] = [40, 40, 40];
pub const FREE_GRAY: [u8; 3] = [200, 200, 200];
pub const OCCUPIED: [u8; 3] = [0, 0, 0];
pub const TRAJECTORY_RED: [u8; 3] = [220, 20, 20];
pub const WEDGE_BLUE: [u8; 3] = [30, 60, 230];

const PALETTE: [[u8; 3]; 12] = [
    [230, 159, 0],
    [86, 180, 233],
    [0, 158, 115],
    [240, 228, 66],
    [0, 114, 178],
    [213, 94, 0],
    [204, 121, 167],
    [120, 190, 60],
    [160, 100, 220],
    [255, 140, 140],
    [100, 200, 200],
    [170, 140, 90],
];

const WEDGE_HALF_ANGLE: f64 = std::f64::consts::FRAC_PI_6;
const WEDGE_RADIUS_M: f64 = 0.6;

pub fn room_color(key: u64) -> [u8; 3] {
    PALETTE[(key % PALETTE.len() as u64) as usize]
}

#[derive(Clone, Debug, PartialEq)]
pub struct BevImage {
    pub image: Rgb,
    pub legend: Vec<(u64, [u8; 3])>,
    pub meters_per_pixel: f64,
}

impl BevImage {
    pub fn to_png(&self) -> Vec<u8> {
        self.image.to_png()
    }
}

/// One pixel per grid cell, north up. `rooms` pairs a stable key (room id
/// or region index) with its mask.
pub fn render_bev(grid: &OccupancyGrid, rooms: &[(u64, &CellMask)], state: &TriggerState) -> BevImage {
    let (w, h) = grid.dims();
    let (i0, j0) = grid.origin_cell();
    let mut img = Rgb::filled(w as u32, h as u32, UNKNOWN_GRAY);
    let to_px = |i: i32, j: i32| -> Option<(u32, u32)> {
        let (di, dj) = (i - i0, j - j0);
        if di < 0 || dj < 0 || di as usize >= w || dj as usize >= h {
            return None;
        }
        Some((di as u32, (h - 1 - dj as usize) as u32))
    };
    for dj in 0..h as i32 {
        for di in 0..w as i32 {
            let c = (i0 + di, j0 + dj);
            let color = match grid.get(c) {
                Occupancy::Free => FREE_GRAY,
                Occupancy::Occupied => OCCUPIED,
                Occupancy::Unknown => continue,
            };
            let (x, y) = to_px(c.0, c.1).expect("inside grid");
            img.set(x, y, color);
        }
    }
    let mut legend = Vec::new();
    for (key, mask) in rooms {
        let color = room_color(*key);
        legend.push((*key, color));
        for c in mask.cells() {
            if let Some((x, y)) = to_px(c.0, c.1) {
                img.blend(x, y, color, 0.5);
            }
        }
    }
    let floor = grid.floor_id;
    if let Some(path) = state.trajectory.get(&floor) {
        for seg in path.windows(2) {
            let a = grid.cell_of(seg[0][0], seg[0][1]);
            let b = grid.cell_of(seg[1][0], seg[1][1]);
            for c in line_cells(a, b) {
                if let Some((x, y)) = to_px(c.0, c.1) {
                    img.set(x, y, TRAJECTORY_RED);
                }
            }
        }
        if path.len() == 1 {
            let c = grid.cell_of(path[0][0], path[0][1]);
            if let Some((x, y)) = to_px(c.0, c.1) {
                img.set(x, y, TRAJECTORY_RED);
            }
        }
    }
    for p in state.update_points.iter().filter(|p| p.floor_id == floor) {
        draw_wedge(&mut img, grid, p, state.age_weight(p), &to_px);
    }
    legend.sort();
    BevImage { image: img, legend, meters_per_pixel: grid.resolution }
}

fn draw_wedge(
    img: &mut Rgb,
    grid: &OccupancyGrid,
    p: &UpdatePoint,
    alpha: f64,
    to_px: &dyn Fn(i32, i32) -> Option<(u32, u32)>,
) {
    if alpha <= 0.0 {
        return;
    }
    let res = grid.resolution;
    let [px, py] = p.pose.xy();
    let yaw = p.pose.yaw();
    let r_cells = (WEDGE_RADIUS_M / res).ceil() as i32;
    let (ci, cj) = grid.cell_of(px, py);
    for dj in -r_cells..=r_cells {
        for di in -r_cells..=r_cells {
            let x = ((ci + di) as f64 + 0.5) * res - px;
            let yy = ((cj + dj) as f64 + 0.5) * res - py;
            let d = (x * x + yy * yy).sqrt();
            if d > WEDGE_RADIUS_M {
                continue;
            }
            let ang = (yy.atan2(x) - yaw + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            if d < res || ang.abs() <= WEDGE_HALF_ANGLE {
                if let Some((u, v)) = to_px(ci + di, cj + dj) {
                    img.blend(u, v, WEDGE_BLUE, alpha);
                }
            }
        }
    }
}

/// Bresenham cells from `a` to `b`, both ends included.
pub fn line_cells(a: (i32, i32), b: (i32, i32)) -> Vec<(i32, i32)> {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::new();
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose::Pose;
    use crate::ids::FloorId;

    fn grid() -> OccupancyGrid {
        let mut g = OccupancyGrid::new(FloorId(1), 0.05);
        for i in 0..60 {
            for j in 0..40 {
                g.mark_free((i, j));
            }
        }
        g
    }

    #[test]
    fn masks_only_without_trajectory() {
        let g = grid();
        let m = CellMask::from_cells((0..10).flat_map(|i| (0..10).map(move |j| (i, j))));
        let bev = render_bev(&g, &[(3, &m)], &TriggerState::default());
        let (w, h) = g.dims();
        assert_eq!((bev.image.width as usize, bev.image.height as usize), (w, h));
        assert!(!bev.image.pixels.chunks(3).any(|p| p == TRAJECTORY_RED || p == WEDGE_BLUE));
        assert_eq!(bev.legend, vec![(3, room_color(3))]);
    }

    #[test]
    fn deterministic_and_faded() {
        let g = grid();
        let mut s = TriggerState::default();
        s.note_motion(FloorId(1), &Pose::looking(0.0, [0.5, 0.5, 1.2], 0.0));
        s.note_motion(FloorId(1), &Pose::looking(1.0, [2.5, 1.5, 1.2], 0.0));
        s.record_update(FloorId(1), Some(&Pose::looking(1.0, [1.5, 1.0, 1.2], 0.0)), Vec::new());
        let a = render_bev(&g, &[], &s).to_png();
        let b = render_bev(&g, &[], &s).to_png();
        assert_eq!(a, b);
        s.now = 1.0 + 121.0;
        let faded = render_bev(&g, &[], &s);
        s.update_points.clear();
        let none = render_bev(&g, &[], &s);
        assert_eq!(faded.image, none.image);
        assert_ne!(a, faded.to_png());
    }
}
