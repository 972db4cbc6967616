use super::mask::{cell_of, Cell};
use crate::ids::FloorId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Occupancy {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

const CHUNK: i32 = 64;

/// Per-floor 2D occupancy grid on the global cell lattice. Grows in
/// 64-cell chunks as observations arrive outside the current extent.
///
/// Cell states only move forward (unknown → free → occupied), so feeding
/// the same observation twice leaves the grid unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyGrid {
    pub floor_id: FloorId,
    pub resolution: f64,
    min_i: i32,
    min_j: i32,
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl OccupancyGrid {
    pub fn new(floor_id: FloorId, resolution: f64) -> Self {
        assert!(resolution > 0.0, "grid resolution must be positive");
        OccupancyGrid { floor_id, resolution, min_i: 0, min_j: 0, width: 0, height: 0, cells: Vec::new() }
    }

    pub fn origin_cell(&self) -> Cell {
        (self.min_i, self.min_j)
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// World coordinates of the lower-left grid corner.
    pub fn origin(&self) -> [f64; 2] {
        [self.min_i as f64 * self.resolution, self.min_j as f64 * self.resolution]
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Cell {
        cell_of(x, y, self.resolution)
    }

    fn index(&self, c: Cell) -> Option<usize> {
        let (di, dj) = (c.0 - self.min_i, c.1 - self.min_j);
        if di < 0 || dj < 0 || di as usize >= self.width || dj as usize >= self.height {
            None
        } else {
            Some(dj as usize * self.width + di as usize)
        }
    }

    pub fn get(&self, c: Cell) -> Occupancy {
        match self.index(c).map(|k| self.cells[k]) {
            Some(1) => Occupancy::Free,
            Some(2) => Occupancy::Occupied,
            _ => Occupancy::Unknown,
        }
    }

    /// Pre-allocates the rectangle spanned by two cells.
    pub fn reserve(&mut self, a: Cell, b: Cell) {
        self.ensure((a.0.min(b.0), a.1.min(b.1)));
        self.ensure((a.0.max(b.0), a.1.max(b.1)));
    }

    fn ensure(&mut self, c: Cell) {
        if self.index(c).is_some() {
            return;
        }
        let (lo_i, lo_j, hi_i, hi_j) = if self.width == 0 {
            (c.0, c.1, c.0, c.1)
        } else {
            (
                self.min_i.min(c.0),
                self.min_j.min(c.1),
                (self.min_i + self.width as i32 - 1).max(c.0),
                (self.min_j + self.height as i32 - 1).max(c.1),
            )
        };
        let new_min_i = lo_i.div_euclid(CHUNK) * CHUNK;
        let new_min_j = lo_j.div_euclid(CHUNK) * CHUNK;
        let new_w = ((hi_i.div_euclid(CHUNK) + 1) * CHUNK - new_min_i) as usize;
        let new_h = ((hi_j.div_euclid(CHUNK) + 1) * CHUNK - new_min_j) as usize;
        let mut cells = vec![0u8; new_w * new_h];
        for j in 0..self.height {
            let dst = (j as i32 + self.min_j - new_min_j) as usize * new_w + (self.min_i - new_min_i) as usize;
            cells[dst..dst + self.width].copy_from_slice(&self.cells[j * self.width..(j + 1) * self.width]);
        }
        self.min_i = new_min_i;
        self.min_j = new_min_j;
        self.width = new_w;
        self.height = new_h;
        self.cells = cells;
    }

    pub fn mark_free(&mut self, c: Cell) {
        self.ensure(c);
        let k = self.index(c).unwrap();
        if self.cells[k] == 0 {
            self.cells[k] = 1;
        }
    }

    pub fn mark_occupied(&mut self, c: Cell) {
        self.ensure(c);
        let k = self.index(c).unwrap();
        self.cells[k] = 2;
    }

    /// Cells the camera itself stood in are free regardless of history.
    pub fn force_free(&mut self, c: Cell) {
        self.ensure(c);
        let k = self.index(c).unwrap();
        self.cells[k] = 1;
    }

    pub fn count(&self, state: Occupancy) -> usize {
        self.cells.iter().filter(|v| **v == state as u8).count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.cells.iter().enumerate().filter(|(_, v)| **v == 1).map(move |(k, _)| {
            (self.min_i + (k % self.width.max(1)) as i32, self.min_j + (k / self.width.max(1)) as i32)
        })
    }

    /// Row-major free-cell bitmap over the grid extent.
    pub fn free_bitmap(&self) -> Vec<bool> {
        self.cells.iter().map(|v| *v == 1).collect()
    }

    pub fn raw(&self) -> &[u8] {
        &self.cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grows_and_keeps_content() {
        let mut g = OccupancyGrid::new(FloorId(1), 0.05);
        g.mark_free((3, 4));
        g.mark_occupied((-100, 200));
        assert_eq!(g.get((3, 4)), Occupancy::Free);
        assert_eq!(g.get((-100, 200)), Occupancy::Occupied);
        assert_eq!(g.get((1000, 1000)), Occupancy::Unknown);
        let (w, h) = g.dims();
        assert_eq!(w % 64, 0);
        assert_eq!(h % 64, 0);
    }

    #[test]
    fn states_are_monotone() {
        let mut g = OccupancyGrid::new(FloorId(1), 0.05);
        g.mark_occupied((0, 0));
        g.mark_free((0, 0));
        assert_eq!(g.get((0, 0)), Occupancy::Occupied);
        g.force_free((0, 0));
        assert_eq!(g.get((0, 0)), Occupancy::Free);
    }
}
