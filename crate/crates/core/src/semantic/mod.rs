//! Semantic stream: object instantiation, association, best views and
//! local spatial topology.

pub mod associate;
pub mod backproject;
pub mod process;
pub mod topology;
pub mod types;

pub use associate::{
    associate, best_view_update, consolidate, match_candidate, merged_node, Association, AssociationConfig, Candidate, MergeRecord,
    MergeStage, TopologyMode,
};
pub use backproject::{backproject, SkipReason};
pub use process::{match_masks_to_rooms, process_keyframe, FrameDelta, ROOM_MATCH_IOU};
pub use topology::{cluster_xy, geometric_topology, model_topology, pair_relations};
pub use types::{Detection, ObservationFrame, PixelMask};
