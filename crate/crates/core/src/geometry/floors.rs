use serde::{Deserialize, Serialize};

use crate::ids::FloorId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FloorConfig {
    pub floor_gap_m: f64,
    pub dwell_frames: usize,
    pub hysteresis_m: f64,
}

impl Default for FloorConfig {
    fn default() -> Self {
        FloorConfig { floor_gap_m: 1.5, dwell_frames: 30, hysteresis_m: 0.3 }
    }
}

/// Camera-height band owned by one floor.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorBand {
    pub id: FloorId,
    pub index: u32,
    pub z_ref: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl FloorBand {
    fn contains(&self, z: f64, margin: f64) -> bool {
        z >= self.z_min - margin && z <= self.z_max + margin
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FloorDecision {
    Same(FloorId),
    Switched { from: FloorId, to: FloorId },
    Created { from: Option<FloorId>, band: FloorBand },
}

impl FloorDecision {
    pub fn floor(&self) -> FloorId {
        match self {
            FloorDecision::Same(f) => *f,
            FloorDecision::Switched { to, .. } => *to,
            FloorDecision::Created { band, .. } => band.id,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Pending {
    Existing(FloorId),
    New,
}

/// Tracks vertical motion and decides which floor each pose belongs to.
///
/// A floor change needs `dwell_frames` consecutive poses outside the current
/// band (widened by the hysteresis); a new floor additionally needs the
/// height offset from the current floor to exceed `floor_gap`.
#[derive(Clone, Debug)]
pub struct FloorTracker {
    cfg: FloorConfig,
    bands: Vec<FloorBand>,
    current: Option<usize>,
    pending: Option<(Pending, Vec<f64>)>,
    next_id: u64,
}

impl FloorTracker {
    pub fn new(cfg: FloorConfig) -> Self {
        FloorTracker { cfg, bands: Vec::new(), current: None, pending: None, next_id: 1 }
    }

    /// Resumes tracking against floors that already exist in a map.
    pub fn with_floors(cfg: FloorConfig, bands: Vec<FloorBand>) -> Self {
        let next_id = bands.iter().map(|b| b.id.0 + 1).max().unwrap_or(1);
        FloorTracker { cfg, bands, current: None, pending: None, next_id }
    }

    pub fn bands(&self) -> &[FloorBand] {
        &self.bands
    }

    pub fn current(&self) -> Option<FloorId> {
        self.current.map(|k| self.bands[k].id)
    }

    fn band_around(&self, z: f64) -> (f64, f64) {
        let half = self.cfg.floor_gap_m / 2.0;
        let (mut lo, mut hi) = (z - half, z + half);
        for b in &self.bands {
            if b.z_ref < z {
                lo = lo.max(b.z_max + 1e-6);
            } else {
                hi = hi.min(b.z_min - 1e-6);
            }
        }
        (lo, hi)
    }

    fn create(&mut self, z: f64) -> FloorBand {
        let (z_min, z_max) = self.band_around(z);
        let band = FloorBand {
            id: FloorId(self.next_id),
            index: self.bands.len() as u32 + 1,
            z_ref: z,
            z_min,
            z_max,
        };
        self.next_id += 1;
        self.bands.push(band.clone());
        self.current = Some(self.bands.len() - 1);
        band
    }

    pub fn observe(&mut self, z: f64) -> FloorDecision {
        let Some(cur) = self.current else {
            if let Some(k) = self.bands.iter().position(|b| b.contains(z, 0.0)) {
                self.current = Some(k);
                return FloorDecision::Same(self.bands[k].id);
            }
            let band = self.create(z);
            return FloorDecision::Created { from: None, band };
        };
        let cur_band = &self.bands[cur];
        if cur_band.contains(z, self.cfg.hysteresis_m) {
            self.pending = None;
            return FloorDecision::Same(cur_band.id);
        }
        let candidate = if let Some(b) = self.bands.iter().find(|b| b.contains(z, 0.0)) {
            Some(Pending::Existing(b.id))
        } else if (z - cur_band.z_ref).abs() > self.cfg.floor_gap_m {
            Some(Pending::New)
        } else {
            None
        };
        let cur_id = cur_band.id;
        let Some(candidate) = candidate else {
            self.pending = None;
            return FloorDecision::Same(cur_id);
        };
        let zs = match &mut self.pending {
            Some((p, zs)) if *p == candidate => {
                zs.push(z);
                zs.len()
            }
            _ => {
                self.pending = Some((candidate.clone(), vec![z]));
                1
            }
        };
        if zs < self.cfg.dwell_frames.max(1) {
            return FloorDecision::Same(cur_id);
        }
        let (_, mut history) = self.pending.take().unwrap();
        match candidate {
            Pending::Existing(id) => {
                self.current = self.bands.iter().position(|b| b.id == id);
                FloorDecision::Switched { from: cur_id, to: id }
            }
            Pending::New => {
                history.sort_by(|a, b| a.total_cmp(b));
                let median = history[history.len() / 2];
                let band = self.create(median);
                FloorDecision::Created { from: Some(cur_id), band }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disjoint(bands: &[FloorBand]) -> bool {
        bands.iter().enumerate().all(|(i, a)| {
            a.z_min < a.z_max
                && bands.iter().skip(i + 1).all(|b| a.z_max < b.z_min || b.z_max < a.z_min)
        })
    }

    #[test]
    fn oscillation_stays_on_one_floor() {
        let mut t = FloorTracker::new(FloorConfig::default());
        for k in 0..500 {
            let z = if k % 2 == 0 { 0.2 } else { -0.2 };
            t.observe(z);
        }
        assert_eq!(t.bands().len(), 1);
    }

    #[test]
    fn climb_creates_second_floor_and_return_reuses_first() {
        let cfg = FloorConfig::default();
        let mut t = FloorTracker::new(cfg.clone());
        let first = t.observe(0.0).floor();
        let mut z_trace = vec![0.0; 10];
        z_trace.extend((0..20).map(|k| 3.0 * k as f64 / 19.0));
        z_trace.extend(std::iter::repeat_n(3.0, 50));
        let mut created_at = None;
        for (k, z) in z_trace.iter().enumerate() {
            if let FloorDecision::Created { .. } = t.observe(*z) {
                created_at = Some(k);
            }
        }
        // oracle: first index after which `dwell` consecutive samples exceed the gap
        let mut run = 0;
        let mut expected = None;
        for (k, z) in z_trace.iter().enumerate() {
            if (z - 0.0f64).abs() > cfg.floor_gap_m {
                run += 1;
                if run == cfg.dwell_frames && expected.is_none() {
                    expected = Some(k);
                }
            } else {
                run = 0;
            }
        }
        assert_eq!(created_at, expected);
        assert_eq!(t.bands().len(), 2);
        let second = t.current().unwrap();
        assert_ne!(second, first);
        for _ in 0..40 {
            t.observe(0.05);
        }
        assert_eq!(t.current(), Some(first));
        assert_eq!(t.bands().len(), 2);
        assert!(disjoint(t.bands()));
    }

    #[test]
    fn bands_disjoint_after_random_history() {
        let mut t = FloorTracker::new(FloorConfig { dwell_frames: 3, ..FloorConfig::default() });
        let mut s = 7u64;
        for _ in 0..3000 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            let level = ((s >> 40) % 4) as f64 * 1.7;
            for _ in 0..4 {
                t.observe(level);
            }
        }
        assert!(disjoint(t.bands()));
    }
}
