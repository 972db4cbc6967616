//! Seeded toy worlds for tests and benchmarks: rectilinear floorplans with
//! furnished rooms, a covering camera trajectory rendered to a sequence
//! directory, ground truth, a query bank, and a brute-force scorer.
//!
//! All randomness comes from [`rng::SplitMix64`], so every artifact is a
//! pure function of its seed and parameters.

pub mod oracle;
pub mod queries;
pub mod rng;
pub mod sequence;
pub mod truth;
pub mod world;

pub use oracle::{oracle_rank, oracle_retrieve, oracle_score};
pub use queries::{generate_query_bank, random_queries, QueryInstance};
pub use rng::SplitMix64;
pub use sequence::{detect, freespace_scan, generate_sequence, DetectionTruth, TrajectoryParams, TrueDetection};
pub use truth::{build_truth_graph, write_bundle, GroundTruth, OracleVerifier, TruthMap};
pub use world::{generate_world, random_world, relation_truth, PlacedObject, RelationTruth, WorldParams, WorldSpec};

use crate::sequence::SequenceError;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
