//! Incremental hierarchical spatial knowledge base.
//!
//! Observations (poses, free-space scans, detections) are folded into a
//! Floor → Room → Area → Object scene graph by two cooperating streams:
//! a geometric stream that keeps per-floor occupancy grids and room
//! segmentations, and a semantic stream that instantiates and associates
//! objects. An event supervisor decides when the hierarchy is reorganised.
//! Natural-language queries are answered by decomposing them into weighted,
//! signed constraints and scoring every object against them.

pub mod bench;
pub mod clock;
pub mod config;
pub mod geometry;
pub mod graph;
pub mod ids;
pub mod pipeline;
pub mod providers;
pub mod raster;
pub mod retrieval;
pub mod semantic;
pub mod sequence;
pub mod supervisor;
pub mod synth;
pub mod text;

pub use graph::{SceneGraph, GraphSnapshot};
pub use ids::{AreaId, FloorId, KeyframeId, ObjectId, RoomId};
