//! Dense tableau simplex for small covering LPs.
//!
//! Solves `min cᵀx  s.t.  A x ≥ b,  x ≥ 0` with `c ≥ 0` by running the
//! primal simplex on the dual `max bᵀy  s.t.  Aᵀy ≤ c,  y ≥ 0`, for which the
//! slack basis is feasible from the start. The primal solution is read off
//! the reduced costs of the dual slacks.

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    pub cost: Vec<f64>,
    /// Sparse rows `(coefficients, rhs)` meaning `Σ a_j x_j ≥ rhs`.
    pub rows: Vec<(Vec<(usize, f64)>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    IterationLimit,
}

impl LpProblem {
    pub fn new(n_vars: usize) -> Self {
        LpProblem {
            cost: vec![0.0; n_vars],
            rows: Vec::new(),
        }
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((coeffs, rhs));
    }
}

pub fn solve_lp(lp: &LpProblem) -> LpOutcome {
    let n = lp.cost.len();
    let p = lp.rows.len();
    assert!(lp.cost.iter().all(|&c| c >= 0.0), "costs must be non-negative");
    if p == 0 {
        return LpOutcome::Optimal {
            x: vec![0.0; n],
            objective: 0.0,
        };
    }
    // tableau rows: one per primal variable; columns: y (p), slacks (n), rhs
    let width = p + n + 1;
    let mut t = vec![0.0; n * width];
    for (i, (coeffs, _)) in lp.rows.iter().enumerate() {
        for &(j, a) in coeffs {
            t[j * width + i] += a;
        }
    }
    for j in 0..n {
        t[j * width + p + j] = 1.0;
        t[j * width + p + n] = lp.cost[j];
    }
    let mut obj = vec![0.0; p + n];
    for (i, (_, rhs)) in lp.rows.iter().enumerate() {
        obj[i] = *rhs;
    }
    let mut value = 0.0;
    let mut basis: Vec<usize> = (p..p + n).collect();

    let max_iter = 50 * (n + p) + 1000;
    let mut degenerate = 0usize;
    for _ in 0..max_iter {
        let bland = degenerate > 20;
        let entering = if bland {
            (0..p + n).find(|&c| obj[c] > EPS)
        } else {
            (0..p + n)
                .filter(|&c| obj[c] > EPS)
                .max_by(|&a, &b| obj[a].total_cmp(&obj[b]).then(b.cmp(&a)))
        };
        let Some(e) = entering else {
            let x = (0..n).map(|j| (-obj[p + j]).max(0.0)).collect();
            return LpOutcome::Optimal { x, objective: value };
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..n {
            let a = t[r * width + e];
            if a > EPS {
                let ratio = t[r * width + p + n] / a;
                let better = match leave {
                    None => true,
                    Some((lr, lratio)) => ratio < lratio - EPS || (ratio <= lratio + EPS && basis[r] < basis[lr]),
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        // unbounded dual: the primal has no feasible point
        let Some((pr, ratio)) = leave else {
            return LpOutcome::Infeasible;
        };
        degenerate = if ratio.abs() <= EPS { degenerate + 1 } else { 0 };

        let piv = t[pr * width + e];
        for v in &mut t[pr * width..(pr + 1) * width] {
            *v /= piv;
        }
        let (before, rest) = t.split_at_mut(pr * width);
        let (prow, after) = rest.split_at_mut(width);
        for row in before.chunks_exact_mut(width).chain(after.chunks_exact_mut(width)) {
            let f = row[e];
            if f != 0.0 {
                for (v, &pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
            }
        }
        let f = obj[e];
        for (o, &pv) in obj.iter_mut().zip(prow.iter()) {
            *o -= f * pv;
        }
        value += f * prow[p + n];
        basis[pr] = e;
    }
    LpOutcome::IterationLimit
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimal(o: LpOutcome) -> (Vec<f64>, f64) {
        match o {
            LpOutcome::Optimal { x, objective } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn two_variable_cover() {
        // min x + y  s.t.  x + 2y >= 4,  3x + y >= 6  ->  x = 1.6, y = 1.2
        let mut lp = LpProblem::new(2);
        lp.cost = vec![1.0, 1.0];
        lp.add_row(vec![(0, 1.0), (1, 2.0)], 4.0);
        lp.add_row(vec![(0, 3.0), (1, 1.0)], 6.0);
        let (x, z) = optimal(solve_lp(&lp));
        assert!((x[0] - 1.6).abs() < 1e-9 && (x[1] - 1.2).abs() < 1e-9);
        assert!((z - 2.8).abs() < 1e-9);
    }

    #[test]
    fn bounded_variable() {
        // min x  s.t.  x >= 2,  -x >= -5
        let mut lp = LpProblem::new(1);
        lp.cost = vec![1.0];
        lp.add_row(vec![(0, 1.0)], 2.0);
        lp.add_row(vec![(0, -1.0)], -5.0);
        let (x, z) = optimal(solve_lp(&lp));
        assert!((x[0] - 2.0).abs() < 1e-12 && (z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible() {
        // x >= 3 and -x >= -1
        let mut lp = LpProblem::new(1);
        lp.cost = vec![1.0];
        lp.add_row(vec![(0, 1.0)], 3.0);
        lp.add_row(vec![(0, -1.0)], -1.0);
        assert_eq!(solve_lp(&lp), LpOutcome::Infeasible);
    }

    #[test]
    fn zero_cost_variable() {
        // min u  s.t.  u - 2b >= 0,  b >= 0.5,  -b >= -1  ->  b = 0.5, u = 1
        let mut lp = LpProblem::new(2);
        lp.cost = vec![1.0, 0.0];
        lp.add_row(vec![(0, 1.0), (1, -2.0)], 0.0);
        lp.add_row(vec![(1, 1.0)], 0.5);
        lp.add_row(vec![(1, -1.0)], -1.0);
        let (x, z) = optimal(solve_lp(&lp));
        assert!((z - 1.0).abs() < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-9 && (x[1] - 0.5).abs() < 1e-9);
    }
}
