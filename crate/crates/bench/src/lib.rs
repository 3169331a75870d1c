//! Datasets shared by the benchmarks.

use ers_core::dist::{sample_dataset, DistributionSpec};
use ers_core::pipeline::{lane_keeping_logs, position_dataset};
use ers_core::store::ChannelDataset;

/// Centered x/y positions of `n` synthetic lane-keeping runs over 50 steps.
pub fn lane_keeping(n: usize, seed: u64) -> ChannelDataset {
    let logs = lane_keeping_logs(n, 50, seed).expect("generator parameters are valid");
    position_dataset(&logs).expect("logs share a horizon")
}

/// `n` two-step trajectories with i.i.d. standard normal values.
pub fn normal_two_step(n: usize, seed: u64) -> ChannelDataset {
    sample_dataset(&DistributionSpec::standard_normal(n, seed), 1).expect("valid spec")
}
