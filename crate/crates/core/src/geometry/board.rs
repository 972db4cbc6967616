use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use super::mask::CellMask;
use super::GeometryError;
use crate::ids::FloorId;

/// One published room segmentation of a floor.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorSegmentation {
    pub floor_id: FloorId,
    pub revision: u64,
    pub masks: Vec<CellMask>,
}

/// Latest-wins store of room masks, written by the geometric stream and
/// read by the semantic stream. Readers get a shared immutable copy.
#[derive(Debug, Default)]
pub struct RoomMaskBoard {
    inner: RwLock<BTreeMap<FloorId, Arc<FloorSegmentation>>>,
}

impl RoomMaskBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_floor(&self, floor_id: FloorId) {
        let mut g = self.inner.write().expect("room mask board poisoned");
        g.entry(floor_id)
            .or_insert_with(|| Arc::new(FloorSegmentation { floor_id, revision: 0, masks: Vec::new() }));
    }

    /// Publishes a new segmentation and returns its revision.
    pub fn publish(&self, floor_id: FloorId, masks: Vec<CellMask>) -> u64 {
        let mut g = self.inner.write().expect("room mask board poisoned");
        let revision = g.get(&floor_id).map_or(0, |s| s.revision) + 1;
        g.insert(floor_id, Arc::new(FloorSegmentation { floor_id, revision, masks }));
        revision
    }

    pub fn latest(&self, floor_id: FloorId) -> Result<Arc<FloorSegmentation>, GeometryError> {
        let g = self.inner.read().expect("room mask board poisoned");
        g.get(&floor_id).cloned().ok_or(GeometryError::UnknownFloor(floor_id))
    }

    pub fn floors(&self) -> Vec<FloorId> {
        self.inner.read().expect("room mask board poisoned").keys().copied().collect()
    }
}
