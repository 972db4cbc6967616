use serde::{Deserialize, Serialize};

use crate::geometry::pose::{Intrinsics, Pose};
use crate::graph::PixelRect;
use crate::ids::{FloorId, KeyframeId};

/// Run-length instance mask in image pixels (row-major runs of set pixels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PixelMask {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<(u32, u32)>,
}

impl PixelMask {
    pub fn bbox(&self) -> Option<PixelRect> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        for &(start, len) in &self.runs {
            for k in start..start + len {
                let (x, y) = (k % self.width.max(1), k / self.width.max(1));
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
        (x0 < x1).then_some(PixelRect { x0, y0, x1, y1 })
    }
}

/// One segmented instance in a keyframe, as produced by upstream perception.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox2d: PixelRect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PixelMask>,
    pub label: String,
    #[serde(default)]
    pub known_category: bool,
    pub embedding: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// `(u, v, depth_m)` samples at mask pixels.
    #[serde(default)]
    pub depth_samples: Vec<[f32; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationFrame {
    pub keyframe_id: KeyframeId,
    pub floor_id: FloorId,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    pub detections: Vec<Detection>,
}
