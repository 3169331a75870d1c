//! Minimum-area α-coverage tubes.
//!
//! Given `N` trajectories and a coverage level α, find `m = ⌈αN⌉`
//! trajectories whose pointwise bounds enclose the smallest area. Three
//! independent routes are provided:
//!
//! * [`solve_exact`]: depth-first branch-and-bound over include/exclude
//!   decisions with a per-step relaxation bound. This is the production path.
//! * [`solve_milp_textbook`]: the literal big-M mixed-integer program solved
//!   by LP-relaxation branch-and-bound. Slow; used as a cross-check.
//! * [`solve_naive`]: leave-k-out enumeration of every size-`m` subset.
//!
//! All three return the same area and, on ties, the same selection: the one
//! whose sorted list of selected indices is lexicographically smallest.

mod exact;
mod heuristic;
mod milp;
mod naive;
mod simplex;
mod sweep;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::ChannelDataset;
use crate::tube::{area_of_widths, pointwise_bounds_weighted, GeometryError, Tube};

pub use exact::solve_exact;
pub use heuristic::greedy_peel;
pub use milp::{bigm_constraints_hold, bigm_min_area, solve_milp_textbook};
pub use naive::{combinations_count, solve_naive, solve_naive_limited, NAIVE_GUARD};
pub use simplex::{solve_lp, LpOutcome, LpProblem};
pub use sweep::{default_alpha_grid, descending_grid, sweep, SweepResult};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("alpha = {0} is outside (0, 1]")]
    AlphaOutOfRange(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid instance: {0}")]
    InstanceInvalid(String),
    #[error("limit reached before any feasible selection was found")]
    NoIncumbent,
    #[error("{count} combinations exceed the enumeration guard of {guard}")]
    CombinatorialBlowup { count: f64, guard: f64 },
    #[error("time limit of {0:.1} s exceeded")]
    Timeout(f64),
    #[error("alpha grid must be strictly decreasing within (0, 1]")]
    InvalidGrid,
    #[error("LP relaxation failed: {0}")]
    Relaxation(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `⌈αN⌉`, tolerant of products such as `0.7 * 10 = 7.000000000000001`.
pub fn required_count(alpha: f64, n: usize) -> usize {
    let raw = alpha * n as f64;
    let m = (raw - 1e-9 * raw.max(1.0)).ceil().max(1.0) as usize;
    m.min(n)
}

/// A solver-ready problem. Immutable once built.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErsInstance {
    data: ChannelDataset,
    alpha: f64,
    m: usize,
    weights: Vec<f64>,
    x_max: Vec<f64>,
    x_min: Vec<f64>,
}

/// Builds an instance requiring `⌈αN⌉` included trajectories with unit
/// channel weights.
pub fn build_instance(data: &ChannelDataset, alpha: f64) -> Result<ErsInstance, SolveError> {
    ErsInstance::new(data.clone(), alpha)
}

impl ErsInstance {
    pub fn new(data: ChannelDataset, alpha: f64) -> Result<Self, SolveError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(SolveError::AlphaOutOfRange(alpha));
        }
        if data.is_empty() {
            return Err(SolveError::EmptyDataset);
        }
        let m = required_count(alpha, data.len());
        Self::assemble(data, alpha, m)
    }

    /// Instance with an explicit inclusion count; `alpha` is recorded as
    /// `m / N`.
    pub fn with_count(data: ChannelDataset, m: usize) -> Result<Self, SolveError> {
        if data.is_empty() {
            return Err(SolveError::EmptyDataset);
        }
        if m == 0 || m > data.len() {
            return Err(SolveError::InstanceInvalid(format!("m = {m} for N = {}", data.len())));
        }
        let alpha = m as f64 / data.len() as f64;
        Self::assemble(data, alpha, m)
    }

    /// Instance over a subset of a larger dataset that must still include
    /// `m` trajectories; `alpha` is carried through unchanged.
    pub(crate) fn for_pool(data: ChannelDataset, alpha: f64, m: usize) -> Result<Self, SolveError> {
        if m == 0 || m > data.len() {
            return Err(SolveError::InstanceInvalid(format!(
                "pool of {} cannot include {m}",
                data.len()
            )));
        }
        Self::assemble(data, alpha, m)
    }

    fn assemble(data: ChannelDataset, alpha: f64, m: usize) -> Result<Self, SolveError> {
        let all: Vec<usize> = (0..data.len()).collect();
        let (x_max, x_min) = row_bounds(&data, &all);
        Ok(ErsInstance {
            weights: vec![1.0; data.n_channels()],
            data,
            alpha,
            m,
            x_max,
            x_min,
        })
    }

    /// Replaces the unit channel weights used by the area measure.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, SolveError> {
        if weights.len() != self.data.n_channels() || weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(SolveError::InstanceInvalid("weights must be positive, one per channel".into()));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn data(&self) -> &ChannelDataset {
        &self.data
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Required number of included trajectories.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    /// Number of trajectories to reject, `N - m`.
    pub fn k(&self) -> usize {
        self.n() - self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Pointwise maximum over all trajectories, time-major.
    pub fn x_max(&self) -> &[f64] {
        &self.x_max
    }

    /// Pointwise minimum over all trajectories, time-major.
    pub fn x_min(&self) -> &[f64] {
        &self.x_min
    }

    /// Tube area of the trajectories flagged in `mask`.
    pub fn subset_area(&self, mask: &[bool]) -> f64 {
        let sel: Vec<usize> = (0..self.n()).filter(|&i| mask[i]).collect();
        let (hi, lo) = row_bounds(&self.data, &sel);
        let widths: Vec<f64> = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
        area_of_widths(&widths, &self.weights, self.data.dt())
    }

    pub(crate) fn area_of_widths(&self, widths: &[f64]) -> f64 {
        area_of_widths(widths, &self.weights, self.data.dt())
    }

    pub fn tube_of(&self, mask: &[bool]) -> Result<Tube, SolveError> {
        let sel: Vec<usize> = (0..self.n()).filter(|&i| mask[i]).collect();
        Ok(pointwise_bounds_weighted(&self.data, &sel, &self.weights)?)
    }

    pub(crate) fn solution(
        &self,
        selection: Vec<bool>,
        area: f64,
        proven_optimal: bool,
        nodes_explored: u64,
        wall_time_s: f64,
    ) -> Result<ErsSolution, SolveError> {
        let tube = self.tube_of(&selection)?;
        Ok(ErsSolution {
            alpha: self.alpha,
            m: self.m,
            selection,
            area,
            proven_optimal,
            nodes_explored,
            wall_time_s,
            tube,
        })
    }
}

fn row_bounds(data: &ChannelDataset, sel: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let len = data.row_len();
    let mut hi = vec![f64::NEG_INFINITY; len];
    let mut lo = vec![f64::INFINITY; len];
    for &i in sel {
        for ((h, l), &v) in hi.iter_mut().zip(lo.iter_mut()).zip(data.row(i)) {
            *h = h.max(v);
            *l = l.min(v);
        }
    }
    (hi, lo)
}

/// Optimal selection, its tube and solve statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErsSolution {
    pub alpha: f64,
    pub m: usize,
    pub selection: Vec<bool>,
    pub area: f64,
    pub proven_optimal: bool,
    pub nodes_explored: u64,
    pub wall_time_s: f64,
    pub tube: Tube,
}

impl ErsSolution {
    pub fn selected(&self) -> Vec<usize> {
        self.selection
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn rejected(&self) -> Vec<usize> {
        self.selection
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (!b).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Prefer the selection whose sorted index list is lexicographically
    /// smallest.
    #[default]
    LexSmallest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub time_limit: Duration,
    pub node_limit: u64,
    pub workers: usize,
    pub tie_break: TieBreak,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            time_limit: Duration::from_secs(600),
            node_limit: 1_000_000_000,
            workers: 1,
            tie_break: TieBreak::LexSmallest,
        }
    }
}

impl SolveConfig {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn with_time_limit(mut self, limit: Duration) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn with_node_limit(mut self, nodes: u64) -> Self {
        self.node_limit = nodes;
        self
    }

    fn validate(&self) -> Result<(), SolveError> {
        if self.time_limit.is_zero() || self.node_limit == 0 || self.workers == 0 {
            return Err(SolveError::InstanceInvalid("solver limits must be positive".into()));
        }
        Ok(())
    }
}

/// `a` precedes `b` when, at the first differing position, `a` selects the
/// trajectory and `b` does not.
pub(crate) fn lex_less(a: &[bool], b: &[bool]) -> bool {
    match a.iter().zip(b).find(|(x, y)| x != y) {
        Some((&x, _)) => x,
        None => false,
    }
}

/// True when `(area_a, a)` is strictly better than `(area_b, b)`.
pub(crate) fn better(area_a: f64, a: &[bool], area_b: f64, b: &[bool]) -> bool {
    area_a < area_b || (area_a == area_b && lex_less(a, b))
}
