//! Empirical reachable sets.
//!
//! Minimum-area bounding tubes that contain a chosen fraction of observed
//! trajectories, computed exactly by branch-and-bound, together with the
//! tooling around them: dataset loading, known-distribution checks, a
//! synthetic lane-change generator, a max-margin mode classifier and
//! accuracy/precision metrics.

pub mod classifier;
pub mod dist;
pub mod metrics;
pub mod pipeline;
pub mod solver;
pub mod store;
pub mod synth;
pub mod tube;
