//! Scene graph data model, keyframe store and map persistence.

pub mod export;
pub mod keyframes;
pub mod nodes;
pub mod persist;
pub mod scene;
pub mod snapshot;

pub use export::{from_json, to_dot, to_json, MapDocument};
pub use keyframes::{sha256_hex, KeyframeEntry, KeyframeStore};
pub use nodes::{
    Aabb, AreaNode, BestViewRef, EdgeSource, FloorNode, ObjectNode, PixelRect, Relation, RoomNode, SpatialEdge,
};
pub use persist::{load_map, read_manifest, save_map, LoadedMap, Manifest, MapError};
pub use scene::{embedding_norm as embedding_norm_of, GraphError, GraphSettings, MergedFields, SceneGraph};
pub use snapshot::{snapshot, GraphSnapshot, SharedGraph};
