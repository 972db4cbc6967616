//! Room segmentation over accumulated free space: distance transform,
//! doorway cut, seed components, priority-flood watershed, small-region
//! absorption.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::edt::squared_edt;
use super::grid::OccupancyGrid;
use super::mask::CellMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub door_half_width_m: f64,
    pub min_room_area_m2: f64,
    pub min_free_cells: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig { door_half_width_m: 0.45, min_room_area_m2: 2.0, min_free_cells: 100 }
    }
}

const UNLABELED: u32 = 0;

/// Splits the grid's free cells into disjoint room masks that together
/// cover every free cell. Returns no masks when there is too little free
/// space to segment.
pub fn segment_rooms(grid: &OccupancyGrid, cfg: &SegmentationConfig) -> Vec<CellMask> {
    let (w, h) = grid.dims();
    let free = grid.free_bitmap();
    let n_free = free.iter().filter(|b| **b).count();
    if n_free == 0 || n_free < cfg.min_free_cells {
        return Vec::new();
    }
    let res = grid.resolution;
    let edt2 = squared_edt(&free, w, h);
    let thresh = cfg.door_half_width_m / res;
    let thresh2 = thresh * thresh;

    let neighbors = |k: usize| {
        let (i, j) = (k % w, k / w);
        let mut out = [usize::MAX; 4];
        if i > 0 {
            out[0] = k - 1;
        }
        if i + 1 < w {
            out[1] = k + 1;
        }
        if j > 0 {
            out[2] = k - w;
        }
        if j + 1 < h {
            out[3] = k + w;
        }
        out
    };

    // seeds: connected components of cells that survive the doorway cut
    let mut labels = vec![UNLABELED; w * h];
    let mut next_label = 1u32;
    let mut stack = Vec::new();
    for k in 0..w * h {
        if !free[k] || labels[k] != UNLABELED || edt2[k] < thresh2 {
            continue;
        }
        labels[k] = next_label;
        stack.push(k);
        while let Some(c) = stack.pop() {
            for n in neighbors(c) {
                if n != usize::MAX && free[n] && labels[n] == UNLABELED && edt2[n] >= thresh2 {
                    labels[n] = next_label;
                    stack.push(n);
                }
            }
        }
        next_label += 1;
    }

    // watershed on -EDT: highest distance floods first, ties to lower seed id
    let mut heap: BinaryHeap<(u64, Reverse<u32>, Reverse<u64>, usize)> = BinaryHeap::new();
    let mut seq = 0u64;
    for k in 0..w * h {
        if labels[k] == UNLABELED {
            continue;
        }
        for n in neighbors(k) {
            if n != usize::MAX && free[n] && labels[n] == UNLABELED {
                heap.push((edt2[n] as u64, Reverse(labels[k]), Reverse(seq), n));
                seq += 1;
            }
        }
    }
    while let Some((_, Reverse(label), _, k)) = heap.pop() {
        if labels[k] != UNLABELED {
            continue;
        }
        labels[k] = label;
        for n in neighbors(k) {
            if n != usize::MAX && free[n] && labels[n] == UNLABELED {
                heap.push((edt2[n] as u64, Reverse(label), Reverse(seq), n));
                seq += 1;
            }
        }
    }

    // free pockets no seed could reach become regions of their own
    for k in 0..w * h {
        if !free[k] || labels[k] != UNLABELED {
            continue;
        }
        labels[k] = next_label;
        stack.push(k);
        while let Some(c) = stack.pop() {
            for n in neighbors(c) {
                if n != usize::MAX && free[n] && labels[n] == UNLABELED {
                    labels[n] = next_label;
                    stack.push(n);
                }
            }
        }
        next_label += 1;
    }

    let mut regions: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (k, &l) in labels.iter().enumerate() {
        if l != UNLABELED {
            regions.entry(l).or_default().push(k);
        }
    }

    let min_cells = cfg.min_room_area_m2 / (res * res);
    // isolated pockets have no neighbour to join; they stay as their own
    // region so the partition remains exhaustive
    let mut settled: BTreeSet<u32> = BTreeSet::new();
    loop {
        let small = regions
            .iter()
            .filter(|(l, cells)| (cells.len() as f64) < min_cells && !settled.contains(*l))
            .min_by_key(|(l, cells)| (cells.len(), **l))
            .map(|(l, _)| *l);
        let Some(small) = small else { break };
        let mut boundary: BTreeMap<u32, usize> = BTreeMap::new();
        for &c in &regions[&small] {
            for n in neighbors(c) {
                if n != usize::MAX && labels[n] != UNLABELED && labels[n] != small {
                    *boundary.entry(labels[n]).or_default() += 1;
                }
            }
        }
        // longest shared boundary wins, ties to the lower label
        let target = boundary.iter().max_by_key(|(l, n)| (**n, Reverse(**l))).map(|(l, _)| *l);
        match target {
            Some(t) => {
                let cells = regions.remove(&small).unwrap();
                for &c in &cells {
                    labels[c] = t;
                }
                regions.get_mut(&t).unwrap().extend(cells);
            }
            None => {
                settled.insert(small);
            }
        }
    }

    let (oi, oj) = grid.origin_cell();
    regions
        .values()
        .map(|cells| {
            CellMask::from_cells(cells.iter().map(|&k| (oi + (k % w) as i32, oj + (k / w) as i32)))
        })
        .collect()
}
