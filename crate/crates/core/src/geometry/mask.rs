use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Integer cell coordinates on the global, resolution-aligned lattice.
/// Cell `(i, j)` spans `[i·res, (i+1)·res) × [j·res, (j+1)·res)`.
pub type Cell = (i32, i32);

pub fn cell_of(x: f64, y: f64, resolution: f64) -> Cell {
    ((x / resolution).floor() as i32, (y / resolution).floor() as i32)
}

pub fn cell_center(c: Cell, resolution: f64) -> [f64; 2] {
    [(c.0 as f64 + 0.5) * resolution, (c.1 as f64 + 0.5) * resolution]
}

/// A 2D bitmask cropped to its own bounding box. Two masks with the same
/// cells are always structurally equal.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct CellMask {
    min_i: i32,
    min_j: i32,
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

/// Run-length form: runs of set cells in row-major order over the crop box.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub min_i: i32,
    pub min_j: i32,
    pub width: u32,
    pub height: u32,
    pub runs: Vec<(u32, u32)>,
}

impl CellMask {
    pub fn from_cells<I: IntoIterator<Item = Cell>>(cells: I) -> Self {
        let cells: Vec<Cell> = cells.into_iter().collect();
        if cells.is_empty() {
            return CellMask::default();
        }
        let min_i = cells.iter().map(|c| c.0).min().unwrap();
        let max_i = cells.iter().map(|c| c.0).max().unwrap();
        let min_j = cells.iter().map(|c| c.1).min().unwrap();
        let max_j = cells.iter().map(|c| c.1).max().unwrap();
        let width = (max_i - min_i + 1) as u32;
        let height = (max_j - min_j + 1) as u32;
        let mut bits = vec![false; width as usize * height as usize];
        for (i, j) in cells {
            bits[(j - min_j) as usize * width as usize + (i - min_i) as usize] = true;
        }
        CellMask { min_i, min_j, width, height, bits }
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn contains(&self, c: Cell) -> bool {
        let (di, dj) = (c.0 - self.min_i, c.1 - self.min_j);
        if di < 0 || dj < 0 || di >= self.width as i32 || dj >= self.height as i32 {
            return false;
        }
        self.bits[dj as usize * self.width as usize + di as usize]
    }

    pub fn contains_point(&self, x: f64, y: f64, resolution: f64) -> bool {
        self.contains(cell_of(x, y, resolution))
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let w = self.width as usize;
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(move |(k, _)| {
            (self.min_i + (k % w) as i32, self.min_j + (k / w) as i32)
        })
    }

    pub fn bounds(&self) -> Option<(Cell, Cell)> {
        if self.is_empty() {
            return None;
        }
        Some((
            (self.min_i, self.min_j),
            (self.min_i + self.width as i32 - 1, self.min_j + self.height as i32 - 1),
        ))
    }

    pub fn intersection_count(&self, other: &CellMask) -> usize {
        let (small, big) = if self.count() <= other.count() { (self, other) } else { (other, self) };
        small.cells().filter(|c| big.contains(*c)).count()
    }

    pub fn iou(&self, other: &CellMask) -> f64 {
        let inter = self.intersection_count(other);
        let union = self.count() + other.count() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    pub fn centroid(&self, resolution: f64) -> Option<[f64; 2]> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for c in self.cells() {
            let p = cell_center(c, resolution);
            sx += p[0];
            sy += p[1];
        }
        Some([sx / n as f64, sy / n as f64])
    }

    pub fn to_rle(&self) -> RleMask {
        let mut runs = Vec::new();
        let mut start: Option<u32> = None;
        for (k, b) in self.bits.iter().enumerate() {
            match (b, start) {
                (true, None) => start = Some(k as u32),
                (false, Some(s)) => {
                    runs.push((s, k as u32 - s));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push((s, self.bits.len() as u32 - s));
        }
        RleMask { min_i: self.min_i, min_j: self.min_j, width: self.width, height: self.height, runs }
    }

    pub fn from_rle(rle: &RleMask) -> Result<Self, String> {
        let total = rle.width as u64 * rle.height as u64;
        let mut cells = Vec::new();
        let mut last_end = 0u64;
        for &(s, l) in &rle.runs {
            let (s, l) = (s as u64, l as u64);
            if l == 0 || s < last_end || s + l > total {
                return Err(format!("run ({s}, {l}) out of order or outside {total} cells"));
            }
            last_end = s + l;
            for k in s..s + l {
                let k = k as u32;
                cells.push((rle.min_i + (k % rle.width) as i32, rle.min_j + (k / rle.width) as i32));
            }
        }
        Ok(CellMask::from_cells(cells))
    }

    pub fn to_set(&self) -> HashSet<Cell> {
        self.cells().collect()
    }
}

impl Serialize for CellMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_rle().serialize(s)
    }
}

impl<'de> Deserialize<'de> for CellMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rle = RleMask::deserialize(d)?;
        CellMask::from_rle(&rle).map_err(serde::de::Error::custom)
    }
}
