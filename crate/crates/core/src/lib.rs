//! Vector similarity search under centroid-targeted poisoning.
//!
//! The crate bundles exact and approximate nearest-neighbour indexes, the
//! global and cluster-wise Black-Hole injection attacks, the retrieval metrics
//! used to score them, a numerical check of the centroid-hubness condition,
//! and four defenses (centering + L2, z-score, query-side projection removal
//! and probe-based detection).

pub mod attack;
pub mod clustering;
pub mod corpus;
pub mod defense;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod index;
pub mod rng;
pub mod synthgen;
pub mod theory;

pub use error::{Error, Result};
pub use geometry::DistanceMetric;
