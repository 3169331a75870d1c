//! Leave-k-out enumeration: the ground-truth oracle for the other solvers.

use std::time::{Duration, Instant};

use super::{ErsInstance, ErsSolution, SolveError};

/// Largest number of size-`m` subsets [`solve_naive`] will enumerate.
pub const NAIVE_GUARD: f64 = 1e7;

/// `C(n, r)` as a float; exact for the magnitudes the guard allows.
pub fn combinations_count(n: usize, r: usize) -> f64 {
    let r = r.min(n - r.min(n));
    (0..r).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Evaluates every size-`m` subset and keeps the smallest area. Subsets are
/// visited in lexicographic order of their index lists and only a strictly
/// smaller area replaces the current best, so ties resolve to the
/// lexicographically smallest selection.
pub fn solve_naive(inst: &ErsInstance) -> Result<ErsSolution, SolveError> {
    enumerate(inst, None)
}

/// [`solve_naive`] with a wall-clock budget; fails with
/// [`SolveError::Timeout`] when the budget runs out.
pub fn solve_naive_limited(inst: &ErsInstance, limit: Duration) -> Result<ErsSolution, SolveError> {
    enumerate(inst, Some(limit))
}

fn enumerate(inst: &ErsInstance, limit: Option<Duration>) -> Result<ErsSolution, SolveError> {
    let start = Instant::now();
    let (n, m) = (inst.n(), inst.m());
    let count = combinations_count(n, m);
    if count > NAIVE_GUARD {
        return Err(SolveError::CombinatorialBlowup {
            count,
            guard: NAIVE_GUARD,
        });
    }
    let data = inst.data();
    let len = data.row_len();
    let mut hi = vec![0.0; len];
    let mut lo = vec![0.0; len];
    let mut widths = vec![0.0; len];
    let mut idx: Vec<usize> = (0..m).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut visited: u64 = 0;
    loop {
        hi.copy_from_slice(data.row(idx[0]));
        lo.copy_from_slice(data.row(idx[0]));
        for &i in &idx[1..] {
            for ((h, l), &v) in hi.iter_mut().zip(lo.iter_mut()).zip(data.row(i)) {
                *h = h.max(v);
                *l = l.min(v);
            }
        }
        for ((w, h), l) in widths.iter_mut().zip(&hi).zip(&lo) {
            *w = h - l;
        }
        let area = inst.area_of_widths(&widths);
        if best.as_ref().map_or(true, |(a, _)| area < *a) {
            best = Some((area, idx.clone()));
        }
        visited += 1;
        if let Some(limit) = limit {
            if visited % 4096 == 0 && start.elapsed() > limit {
                return Err(SolveError::Timeout(limit.as_secs_f64()));
            }
        }
        // next combination in lexicographic order
        let Some(pos) = (0..m).rev().find(|&j| idx[j] != j + n - m) else {
            break;
        };
        idx[pos] += 1;
        for j in pos + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
    let (area, sel) = best.ok_or(SolveError::EmptyDataset)?;
    let mut mask = vec![false; n];
    for i in sel {
        mask[i] = true;
    }
    inst.solution(mask, area, true, visited, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::build_instance;
    use crate::store::ChannelDataset;

    #[test]
    fn counts() {
        assert_eq!(combinations_count(4, 3), 4.0);
        assert_eq!(combinations_count(100, 96), 3_921_225.0);
        assert_eq!(combinations_count(5, 5), 1.0);
        assert!(combinations_count(40, 20) > NAIVE_GUARD);
    }

    #[test]
    fn four_points() {
        let d = ChannelDataset::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![10.0]], 1.0).unwrap();
        let sol = solve_naive(&build_instance(&d, 0.75).unwrap()).unwrap();
        assert_eq!(sol.selection, vec![true, true, true, false]);
        assert!((sol.area - 0.2).abs() < 1e-15);
        assert_eq!(sol.nodes_explored, 4);
    }

    #[test]
    fn full_set_single_combination() {
        let d = ChannelDataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 0.0]], 1.0).unwrap();
        let sol = solve_naive(&build_instance(&d, 1.0).unwrap()).unwrap();
        assert_eq!(sol.nodes_explored, 1);
        assert_eq!(sol.area, 3.0);
    }

    #[test]
    fn guard() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let d = ChannelDataset::from_rows(&rows, 1.0).unwrap();
        assert!(matches!(
            solve_naive(&build_instance(&d, 0.5).unwrap()),
            Err(SolveError::CombinatorialBlowup { .. })
        ));
    }
}
