//! The literal big-M program, solved by LP-relaxation branch-and-bound.
//!
//! Variables are the bounds `x̄_d`, `x̲_d` for every (step, channel) `d` and a
//! selector `b_i ∈ {0, 1}` per trajectory. The bilinear inclusion
//! constraints are linearised with the dataset envelopes:
//!
//! ```text
//! x̄ - x_i ≥ (1 - b_i)(x_min - x_i)
//! x̲ - x_i ≤ (1 - b_i)(x_max - x_i)
//! Σ b_i = m
//! ```
//!
//! Internally the bounds are shifted to `u = x̄ - x_min ≥ 0` and
//! `l = x_max - x̲ ≥ 0`, which turns every constraint into a covering row
//! (`u_d ≥ b_i (x_id - x_min,d)`), and the relaxation is handed to the dense
//! simplex. This path exists to cross-check [`super::solve_exact`]; it is
//! only practical for a dozen or so trajectories.

use std::time::Instant;

use super::simplex::{solve_lp, LpOutcome, LpProblem};
use super::{ErsInstance, ErsSolution, SolveConfig, SolveError};
use crate::tube::Tube;

const FREE: u8 = 0;
const ONE: u8 = 1;
const ZERO: u8 = 2;
const INT_TOL: f64 = 1e-7;
const OBJ_TOL: f64 = 1e-9;

struct Relaxation {
    objective: f64,
    /// LP value of every free selector, indexed by trajectory.
    b: Vec<Option<f64>>,
}

/// Per-dim area weights `weight_c * dt`.
fn dim_weights(inst: &ErsInstance) -> Vec<f64> {
    let n_c = inst.data().n_channels();
    let dt = inst.data().dt();
    (0..inst.data().row_len()).map(|d| inst.weights()[d % n_c] * dt).collect()
}

/// Relaxation at a node. `fixed[i]` is FREE, ONE or ZERO; `count` is the
/// required number of selected trajectories (`Some(m)` for the MILP, `None`
/// when every selector is fixed).
fn relax(inst: &ErsInstance, fixed: &[u8], count: Option<usize>) -> Result<Option<Relaxation>, SolveError> {
    let dims = inst.data().row_len();
    let n = inst.n();
    let (xmax, xmin) = (inst.x_max(), inst.x_min());
    let free: Vec<usize> = (0..n).filter(|&i| fixed[i] == FREE).collect();
    let w = dim_weights(inst);

    let mut lp = LpProblem::new(2 * dims + free.len());
    for d in 0..dims {
        lp.cost[d] = w[d];
        lp.cost[dims + d] = w[d];
    }
    let u = |d: usize| d;
    let l = |d: usize| dims + d;
    let bvar = |k: usize| 2 * dims + k;

    for i in 0..n {
        let row = inst.data().row(i);
        match fixed[i] {
            ONE => {
                for d in 0..dims {
                    let up = row[d] - xmin[d];
                    if up > 0.0 {
                        lp.add_row(vec![(u(d), 1.0)], up);
                    }
                    let down = xmax[d] - row[d];
                    if down > 0.0 {
                        lp.add_row(vec![(l(d), 1.0)], down);
                    }
                }
            }
            ZERO => {}
            _ => {}
        }
    }
    for (k, &i) in free.iter().enumerate() {
        let row = inst.data().row(i);
        for d in 0..dims {
            let up = row[d] - xmin[d];
            if up > 0.0 {
                lp.add_row(vec![(u(d), 1.0), (bvar(k), -up)], 0.0);
            }
            let down = xmax[d] - row[d];
            if down > 0.0 {
                lp.add_row(vec![(l(d), 1.0), (bvar(k), -down)], 0.0);
            }
        }
        lp.add_row(vec![(bvar(k), -1.0)], -1.0);
    }
    if let Some(m) = count {
        let ones = fixed.iter().filter(|&&s| s == ONE).count();
        if ones > m || ones + free.len() < m {
            return Ok(None);
        }
        let need = (m - ones) as f64;
        if !free.is_empty() {
            let all: Vec<(usize, f64)> = (0..free.len()).map(|k| (bvar(k), 1.0)).collect();
            let neg: Vec<(usize, f64)> = all.iter().map(|&(j, _)| (j, -1.0)).collect();
            lp.add_row(all, need);
            lp.add_row(neg, -need);
        }
    }

    let offset: f64 = (0..dims).map(|d| w[d] * (xmin[d] - xmax[d])).sum();
    match solve_lp(&lp) {
        LpOutcome::Optimal { x, objective } => {
            let mut b = vec![None; n];
            for (k, &i) in free.iter().enumerate() {
                b[i] = Some(x[bvar(k)].clamp(0.0, 1.0));
            }
            Ok(Some(Relaxation {
                objective: objective + offset,
                b,
            }))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::IterationLimit => Err(SolveError::Relaxation("simplex iteration limit".into())),
    }
}

/// Minimum area admitted by the big-M constraint system with every selector
/// fixed to `b`. For a nonempty selection this equals the area of the
/// selection's pointwise bounds.
pub fn bigm_min_area(inst: &ErsInstance, b: &[bool]) -> Result<f64, SolveError> {
    let fixed: Vec<u8> = b.iter().map(|&s| if s { ONE } else { ZERO }).collect();
    relax(inst, &fixed, None)?
        .map(|r| r.objective)
        .ok_or_else(|| SolveError::Relaxation("fixed selection infeasible".into()))
}

/// Evaluates the linearised constraints literally for binary `b` and the
/// bounds of `tube`.
pub fn bigm_constraints_hold(inst: &ErsInstance, b: &[bool], tube: &Tube) -> bool {
    let n_c = inst.data().n_channels();
    let (xmax, xmin) = (inst.x_max(), inst.x_min());
    (0..inst.n()).all(|i| {
        let off = if b[i] { 0.0 } else { 1.0 };
        inst.data().row(i).iter().enumerate().all(|(d, &x)| {
            let (s, c) = (d / n_c, d % n_c);
            let (up, lo) = (tube.upper[c][s], tube.lower[c][s]);
            up - x >= off * (xmin[d] - x) && lo - x <= off * (xmax[d] - x)
        })
    })
}

struct Milp<'a> {
    inst: &'a ErsInstance,
    fixed: Vec<u8>,
    /// Best integral point found so far.
    best: Option<(f64, Vec<bool>)>,
    /// Objective ceiling; nodes whose relaxation exceeds it are pruned.
    cap: f64,
    /// Stop at the first integral point within `cap` instead of improving.
    first_only: bool,
    nodes: u64,
    node_limit: u64,
    deadline: Instant,
    aborted: bool,
}

impl Milp<'_> {
    fn tol(&self) -> f64 {
        OBJ_TOL * self.cap.abs().max(1.0)
    }

    /// Returns true when the search should unwind.
    fn dfs(&mut self) -> Result<bool, SolveError> {
        self.nodes += 1;
        if self.nodes > self.node_limit || Instant::now() >= self.deadline {
            self.aborted = true;
            return Ok(true);
        }
        let Some(rel) = relax(self.inst, &self.fixed, Some(self.inst.m()))? else {
            return Ok(false);
        };
        if rel.objective > self.cap + self.tol() {
            return Ok(false);
        }
        let frac = rel
            .b
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v.min(1.0 - v))))
            .filter(|&(_, f)| f > INT_TOL)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        let Some((i, _)) = frac else {
            let mask: Vec<bool> = (0..self.inst.n())
                .map(|i| self.fixed[i] == ONE || rel.b[i].is_some_and(|v| v > 0.5))
                .collect();
            if !self.first_only {
                self.cap = self.cap.min(rel.objective);
            }
            self.best = Some((rel.objective, mask));
            return Ok(self.first_only);
        };
        for val in [ONE, ZERO] {
            self.fixed[i] = val;
            let stop = self.dfs()?;
            self.fixed[i] = FREE;
            if stop {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Searches for any integral point within the current cap under the
    /// current fixings.
    fn feasible(&mut self) -> Result<Option<(f64, Vec<bool>)>, SolveError> {
        self.best = None;
        self.first_only = true;
        self.dfs()?;
        Ok(self.best.take())
    }
}

/// Solves the big-M program by branching on the most fractional selector.
///
/// A first pass finds the optimal objective. A second pass then fixes the
/// selectors in index order, keeping `b_i = 1` whenever some integral point
/// within the optimum remains, which yields the lexicographically smallest
/// optimal selection. The reported area is the LP objective at that point.
pub fn solve_milp_textbook(inst: &ErsInstance, cfg: &SolveConfig) -> Result<ErsSolution, SolveError> {
    cfg.validate()?;
    let start = Instant::now();
    let n = inst.n();
    let mut milp = Milp {
        inst,
        fixed: vec![FREE; n],
        best: None,
        cap: f64::INFINITY,
        first_only: false,
        nodes: 0,
        node_limit: cfg.node_limit,
        deadline: start + cfg.time_limit,
        aborted: false,
    };
    milp.dfs()?;
    let mut best = milp.best.take().ok_or(SolveError::NoIncumbent)?;
    if !milp.aborted {
        milp.cap = best.0;
        let mut last = best.clone();
        for i in 0..n {
            milp.fixed[i] = ONE;
            match milp.feasible()? {
                Some(found) => last = found,
                None if milp.aborted => break,
                None => milp.fixed[i] = ZERO,
            }
        }
        if !milp.aborted {
            best = last;
        }
    }
    let (area, mask) = best;
    inst.solution(mask, area, !milp.aborted, milp.nodes, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{build_instance, solve_exact};
    use crate::store::ChannelDataset;

    #[test]
    fn four_points() {
        let d = ChannelDataset::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![10.0]], 1.0).unwrap();
        let inst = build_instance(&d, 0.75).unwrap();
        let sol = solve_milp_textbook(&inst, &SolveConfig::default()).unwrap();
        let exact = solve_exact(&inst, &SolveConfig::default()).unwrap();
        assert_eq!(sol.selection, exact.selection);
        assert!((sol.area - 0.2).abs() < 1e-9);
    }

    #[test]
    fn full_coverage() {
        let d = ChannelDataset::from_rows(&[vec![0.0, 1.0], vec![1.0, 2.0], vec![-1.0, 0.0]], 1.0).unwrap();
        let inst = build_instance(&d, 1.0).unwrap();
        let sol = solve_milp_textbook(&inst, &SolveConfig::default()).unwrap();
        assert_eq!(sol.selection, vec![true; 3]);
        assert!((sol.area - 4.0).abs() < 1e-9);
    }

    #[test]
    fn binary_selectors_match_pointwise_bounds() {
        let d = ChannelDataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 3.0]], 1.0).unwrap();
        let inst = build_instance(&d, 2.0 / 3.0).unwrap();
        for bits in 1u32..8 {
            let b: Vec<bool> = (0..3).map(|i| bits >> i & 1 == 1).collect();
            let tube = inst.tube_of(&b).unwrap();
            assert!(bigm_constraints_hold(&inst, &b, &tube));
            let lp = bigm_min_area(&inst, &b).unwrap();
            assert!((lp - tube.area()).abs() < 1e-9, "{b:?}: {lp} vs {}", tube.area());
        }
    }
}
