//! Geometric stream: occupancy grids, floors, room segmentation, gating.

pub mod board;
pub mod edt;
pub mod floors;
pub mod gating;
pub mod grid;
pub mod integrate;
pub mod mask;
pub mod pose;
pub mod segment;
pub mod stream;

use thiserror::Error;

use crate::ids::{FloorId, KeyframeId};

pub use board::{FloorSegmentation, RoomMaskBoard};
pub use floors::{FloorBand, FloorConfig, FloorDecision, FloorTracker};
pub use gating::{GateDecision, GatingState};
pub use grid::{Occupancy, OccupancyGrid};
pub use integrate::{integrate_frame, DepthImage, FrameHint, FreespaceScan, IntegrationConfig};
pub use mask::{Cell, CellMask, RleMask};
pub use pose::{Intrinsics, Pose, Quat};
pub use segment::{segment_rooms, SegmentationConfig};
pub use stream::{FrameOutcome, GeometricStream, GeometryConfig};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("depth frame is {got:?} but intrinsics declare {expected:?}")]
    MismatchedIntrinsics { expected: (u32, u32), got: (u32, u32) },
    #[error("depth frame given without camera intrinsics")]
    MissingIntrinsics,
    #[error("free-space scan has {0} points but {1} hit flags")]
    MalformedScan(usize, usize),
    #[error("keyframe {0}: global feature is a zero vector")]
    ZeroFeature(KeyframeId),
    #[error("feature dimension changed from {expected} to {got}")]
    FeatureDim { expected: usize, got: usize },
    #[error("unknown floor {0}")]
    UnknownFloor(FloorId),
}
