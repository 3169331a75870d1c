//! Solving a descending grid of coverage levels.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{required_count, solve_exact, ErsInstance, ErsSolution, SolveConfig, SolveError};
use crate::store::ChannelDataset;

/// Per-α solutions along a descending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub alphas: Vec<f64>,
    pub solutions: Vec<ErsSolution>,
    /// Number of candidate trajectories the solver saw at each α.
    pub pool_sizes: Vec<usize>,
    pub accelerated: bool,
    /// Wall time of each grid point, seconds.
    pub wall_times: Vec<f64>,
}

impl SweepResult {
    pub fn areas(&self) -> Vec<f64> {
        self.solutions.iter().map(|s| s.area).collect()
    }

    pub fn total_wall_time(&self) -> f64 {
        self.wall_times.iter().sum()
    }

    pub fn proven_optimal(&self) -> bool {
        self.solutions.iter().all(|s| s.proven_optimal)
    }
}

/// 1.00, 0.95, ..., 0.50.
pub fn default_alpha_grid() -> Vec<f64> {
    descending_grid(1.0, 0.5, 0.05)
}

/// `start, start - step, ...` down to `stop` inclusive, rounded to 1e-9 so
/// that grids built by repeated subtraction compare cleanly.
pub fn descending_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let n = ((start - stop) / step + 1e-9).floor() as usize;
    (0..=n).map(|j| ((start - j as f64 * step) * 1e9).round() / 1e9).collect()
}

pub(crate) fn validate_grid(alphas: &[f64]) -> Result<(), SolveError> {
    let in_range = alphas.iter().all(|&a| a > 0.0 && a <= 1.0);
    let decreasing = alphas.windows(2).all(|w| w[0] > w[1]);
    if alphas.is_empty() || !in_range || !decreasing {
        return Err(SolveError::InvalidGrid);
    }
    Ok(())
}

/// Solves every α of a strictly decreasing grid.
///
/// Without acceleration each grid point is an independent exact solve. With
/// acceleration the candidate pool at each α is the selection from the
/// previous grid point, which is much cheaper but only an upper bound on the
/// true optimum: optimal selections are not always nested. `proven_optimal`
/// then refers to the restricted pool.
pub fn sweep(data: &ChannelDataset, alphas: &[f64], cfg: &SolveConfig, accelerated: bool) -> Result<SweepResult, SolveError> {
    validate_grid(alphas)?;
    if data.is_empty() {
        return Err(SolveError::EmptyDataset);
    }
    let n = data.len();
    let mut solutions = Vec::with_capacity(alphas.len());
    let mut pool_sizes = Vec::with_capacity(alphas.len());
    let mut wall_times = Vec::with_capacity(alphas.len());
    let mut pool: Vec<usize> = (0..n).collect();

    for &alpha in alphas {
        let start = Instant::now();
        let full = ErsInstance::new(data.clone(), alpha)?;
        let sol = if accelerated && pool.len() < n {
            let m = required_count(alpha, n);
            let inst = ErsInstance::for_pool(data.subset(&pool), alpha, m)?;
            let sub = solve_exact(&inst, cfg)?;
            let mut mask = vec![false; n];
            for (j, &i) in pool.iter().enumerate() {
                mask[i] = sub.selection[j];
            }
            full.solution(mask, sub.area, sub.proven_optimal, sub.nodes_explored, 0.0)?
        } else {
            solve_exact(&full, cfg)?
        };
        let wall = start.elapsed().as_secs_f64();
        pool_sizes.push(pool.len());
        if accelerated {
            pool = sol.selected();
        }
        solutions.push(ErsSolution { wall_time_s: wall, ..sol });
        wall_times.push(wall);
    }
    Ok(SweepResult {
        alphas: alphas.to_vec(),
        solutions,
        pool_sizes,
        accelerated,
        wall_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> ChannelDataset {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let x = ((i * 37 % 20) as f64 - 10.0) / 10.0;
                vec![x, 2.0 * x + 0.1 * (i % 3) as f64]
            })
            .collect();
        ChannelDataset::from_rows(&rows, 0.1).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[10], 0.5);
        assert_eq!(g[3], 0.85);
        assert_eq!(descending_grid(1.0, 0.8, 0.02).len(), 11);
    }

    #[test]
    fn rejects_bad_grids() {
        let cfg = SolveConfig::default();
        for g in [vec![], vec![0.9, 0.95], vec![1.2], vec![0.9, 0.9], vec![0.5, 0.0]] {
            assert!(matches!(sweep(&data(), &g, &cfg, false), Err(SolveError::InvalidGrid)));
        }
    }

    #[test]
    fn single_point() {
        let r = sweep(&data(), &[1.0], &SolveConfig::default(), true).unwrap();
        assert_eq!(r.solutions.len(), 1);
        assert!(r.solutions[0].selection.iter().all(|&b| b));
    }

    #[test]
    fn accelerated_dominates_and_is_monotone() {
        let d = data();
        let grid = descending_grid(1.0, 0.6, 0.1);
        let cfg = SolveConfig::default();
        let exact = sweep(&d, &grid, &cfg, false).unwrap();
        let fast = sweep(&d, &grid, &cfg, true).unwrap();
        for (e, f) in exact.areas().iter().zip(fast.areas()) {
            assert!(f >= *e);
        }
        assert!(fast.areas().windows(2).all(|w| w[1] <= w[0]));
        assert!(fast.pool_sizes.windows(2).all(|w| w[1] <= w[0]));
        for (s, &a) in fast.solutions.iter().zip(&grid) {
            assert!(s.selection.iter().filter(|&&b| b).count() >= required_count(a, d.len()));
        }
    }
}
