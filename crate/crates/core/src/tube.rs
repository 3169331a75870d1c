//! Prediction tubes: per-channel upper/lower bound sequences over a horizon.
//!
//! A tube is the product of closed per-channel intervals at every time step.
//! Its size is the weighted sum over channels of the Riemann sum of interval
//! widths, `sum_c w_c * sum_t (upper - lower) * dt`, with `t = 0..=T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::ChannelDataset;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("selection is empty")]
    EmptySelection,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("expected {expected} values, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("selection index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("invalid tube: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tube {
    pub channels: Vec<String>,
    pub dt: f64,
    pub weights: Vec<f64>,
    /// `upper[c][t]`
    pub upper: Vec<Vec<f64>>,
    /// `lower[c][t]`
    pub lower: Vec<Vec<f64>>,
}

impl Tube {
    pub fn new(
        channels: Vec<String>,
        dt: f64,
        weights: Vec<f64>,
        upper: Vec<Vec<f64>>,
        lower: Vec<Vec<f64>>,
    ) -> Result<Self, GeometryError> {
        let n_c = channels.len();
        if n_c == 0 || weights.len() != n_c || upper.len() != n_c || lower.len() != n_c {
            return Err(GeometryError::Invalid("channel counts disagree".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(GeometryError::Invalid(format!("dt = {dt}")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(GeometryError::Invalid("weights must be positive".into()));
        }
        let steps = upper[0].len();
        if steps == 0 {
            return Err(GeometryError::Invalid("empty horizon".into()));
        }
        for (u, l) in upper.iter().zip(&lower) {
            if u.len() != steps || l.len() != steps {
                return Err(GeometryError::Invalid("ragged bounds".into()));
            }
            for (a, b) in u.iter().zip(l) {
                if !(a.is_finite() && b.is_finite()) {
                    return Err(GeometryError::Invalid("non-finite bound".into()));
                }
                if a < b {
                    return Err(GeometryError::Invalid(format!("upper {a} below lower {b}")));
                }
            }
        }
        Ok(Tube {
            channels,
            dt,
            weights,
            upper,
            lower,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel, `T + 1`.
    pub fn steps(&self) -> usize {
        self.upper.first().map(|u| u.len()).unwrap_or(0)
    }

    pub fn area(&self) -> f64 {
        tube_area(self)
    }

    /// True when every interval of `self` lies inside the matching interval
    /// of `other`.
    pub fn is_within(&self, other: &Tube) -> bool {
        self.upper.len() == other.upper.len()
            && self.upper.iter().zip(&other.upper).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x <= y)
            })
            && self
                .lower
                .iter()
                .zip(&other.lower)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x >= y))
    }
}

/// Weighted Riemann sum of interval widths.
///
/// `widths` is time-major (`widths[t * n_c + c]`). Every area in the crate
/// goes through this function so that equal subsets produce bit-identical
/// areas regardless of which solver evaluated them. Widths are summed before
/// scaling, so tubes whose widths sum to the same value compare equal.
pub(crate) fn area_of_widths(widths: &[f64], weights: &[f64], dt: f64) -> f64 {
    let n_c = weights.len();
    let mut total = 0.0;
    for (c, &w) in weights.iter().enumerate() {
        let mut acc = 0.0;
        for width in widths[c..].iter().step_by(n_c) {
            acc += width;
        }
        total += w * acc;
    }
    total * dt
}

pub fn tube_area(t: &Tube) -> f64 {
    let n_c = t.n_channels();
    let steps = t.steps();
    let mut widths = vec![0.0; steps * n_c];
    for c in 0..n_c {
        for s in 0..steps {
            widths[s * n_c + c] = t.upper[c][s] - t.lower[c][s];
        }
    }
    area_of_widths(&widths, &t.weights, t.dt)
}

/// Pointwise max/min of the selected trajectories with unit channel weights.
pub fn pointwise_bounds(data: &ChannelDataset, selection: &[usize]) -> Result<Tube, GeometryError> {
    pointwise_bounds_weighted(data, selection, &vec![1.0; data.n_channels()])
}

pub fn pointwise_bounds_weighted(
    data: &ChannelDataset,
    selection: &[usize],
    weights: &[f64],
) -> Result<Tube, GeometryError> {
    let (&first, rest) = selection.split_first().ok_or(GeometryError::EmptySelection)?;
    if let Some(&bad) = selection.iter().find(|&&i| i >= data.len()) {
        return Err(GeometryError::IndexOutOfRange(bad));
    }
    let n_c = data.n_channels();
    let mut hi = data.row(first).to_vec();
    let mut lo = hi.clone();
    for &i in rest {
        for ((h, l), &v) in hi.iter_mut().zip(lo.iter_mut()).zip(data.row(i)) {
            if v > *h {
                *h = v;
            }
            if v < *l {
                *l = v;
            }
        }
    }
    let upper = (0..n_c).map(|c| hi[c..].iter().step_by(n_c).copied().collect()).collect();
    let lower = (0..n_c).map(|c| lo[c..].iter().step_by(n_c).copied().collect()).collect();
    Tube::new(data.names().to_vec(), data.dt(), weights.to_vec(), upper, lower)
}

fn check_len(t: &Tube, traj: &[f64]) -> Result<(), GeometryError> {
    let expected = t.steps() * t.n_channels();
    if traj.len() != expected {
        return Err(GeometryError::DimensionMismatch {
            expected,
            found: traj.len(),
        });
    }
    Ok(())
}

/// Closed-set membership of one trajectory's channel values (time-major).
pub fn contains(t: &Tube, traj: &[f64]) -> Result<bool, GeometryError> {
    check_len(t, traj)?;
    let n_c = t.n_channels();
    Ok(traj.iter().enumerate().all(|(k, &v)| {
        let (s, c) = (k / n_c, k % n_c);
        t.lower[c][s] <= v && v <= t.upper[c][s]
    }))
}

/// Total excursion of a trajectory outside the tube, summed over channels
/// and steps. Zero exactly when the trajectory is contained.
pub fn cumulative_error(t: &Tube, traj: &[f64]) -> Result<f64, GeometryError> {
    check_len(t, traj)?;
    let n_c = t.n_channels();
    let mut total = 0.0;
    for c in 0..n_c {
        for s in 0..t.steps() {
            let v = traj[s * n_c + c];
            total += (v - t.upper[c][s]).max(0.0) + (t.lower[c][s] - v).max(0.0);
        }
    }
    Ok(total)
}

/// Fraction of the dataset's trajectories contained in the tube.
pub fn empirical_probability(t: &Tube, data: &ChannelDataset) -> Result<f64, GeometryError> {
    if data.is_empty() {
        return Err(GeometryError::EmptyDataset);
    }
    let mut inside = 0usize;
    for i in 0..data.len() {
        if contains(t, data.row(i))? {
            inside += 1;
        }
    }
    Ok(inside as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_channel(rows: &[&[f64]]) -> ChannelDataset {
        ChannelDataset::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), 1.0).unwrap()
    }

    #[test]
    fn bounds_and_area() {
        let d = one_channel(&[&[0.0, 1.0], &[1.0, 2.0], &[-1.0, 0.0]]);
        let t = pointwise_bounds(&d, &[0, 1, 2]).unwrap();
        assert_eq!(t.upper, vec![vec![1.0, 2.0]]);
        assert_eq!(t.lower, vec![vec![-1.0, 0.0]]);
        assert_eq!(tube_area(&t), 4.0);
    }

    #[test]
    fn degenerate_bounds() {
        let d = one_channel(&[&[0.0, 1.0], &[1.0, 2.0]]);
        let t = pointwise_bounds(&d, &[1]).unwrap();
        assert_eq!(t.upper, t.lower);
        assert_eq!(tube_area(&t), 0.0);
        assert_eq!(pointwise_bounds(&d, &[]), Err(GeometryError::EmptySelection));
    }

    #[test]
    fn weighted_area() {
        let t = Tube::new(
            vec!["x".into(), "y".into()],
            1.0,
            vec![1.0, 0.5],
            vec![vec![1.0, 2.0], vec![1.0, 2.0]],
            vec![vec![-1.0, 0.0], vec![-1.0, 0.0]],
        )
        .unwrap();
        assert_eq!(tube_area(&t), 6.0);
    }

    #[test]
    fn membership_is_closed() {
        let t = Tube::new(vec!["x".into()], 1.0, vec![1.0], vec![vec![1.0, 2.0]], vec![vec![-1.0, 0.0]]).unwrap();
        assert!(contains(&t, &[0.0, 1.0]).unwrap());
        assert!(contains(&t, &[1.0, 2.0]).unwrap());
        assert!(!contains(&t, &[1.5, 1.0]).unwrap());
        assert_eq!(
            contains(&t, &[0.0]),
            Err(GeometryError::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn excursions() {
        let t = Tube::new(
            vec!["x".into()],
            1.0,
            vec![1.0],
            vec![vec![1.0, 2.0, 2.0]],
            vec![vec![-1.0, 0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(cumulative_error(&t, &[0.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cumulative_error(&t, &[1.5, 1.0, 1.0]).unwrap(), 0.5);
        let e = cumulative_error(&t, &[0.0, -0.2, -0.2]).unwrap();
        assert!((e - 0.4).abs() < 1e-15);
    }

    #[test]
    fn probability() {
        let d = one_channel(&[&[0.0, 1.0], &[1.0, 2.0], &[-1.0, 0.0], &[0.5, 0.5]]);
        let all = pointwise_bounds(&d, &[0, 1, 2, 3]).unwrap();
        assert_eq!(empirical_probability(&all, &d).unwrap(), 1.0);
        let single = pointwise_bounds(&d, &[0]).unwrap();
        assert_eq!(empirical_probability(&single, &d).unwrap(), 0.25);
    }

    #[test]
    fn invalid_tube_rejected() {
        assert!(Tube::new(vec!["x".into()], 1.0, vec![1.0], vec![vec![0.0]], vec![vec![1.0]]).is_err());
        assert!(Tube::new(vec!["x".into()], 1.0, vec![0.0], vec![vec![1.0]], vec![vec![0.0]]).is_err());
    }

    fn arb_data() -> impl Strategy<Value = ChannelDataset> {
        (2usize..8, 1usize..5, 1usize..3).prop_flat_map(|(n, steps, n_c)| {
            prop::collection::vec(-10.0f64..10.0, n * steps * n_c).prop_map(move |values| {
                ChannelDataset::from_values(
                    (0..n).map(|i| i.to_string()).collect(),
                    (0..n_c).map(|c| format!("c{c}")).collect(),
                    steps,
                    0.5,
                    values,
                )
                .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn selection_monotone(d in arb_data(), mask in prop::collection::vec(any::<bool>(), 8)) {
            let n = d.len();
            let small: Vec<usize> = (0..n).filter(|&i| i == 0 || mask[i]).collect();
            let all: Vec<usize> = (0..n).collect();
            let ts = pointwise_bounds(&d, &small).unwrap();
            let tb = pointwise_bounds(&d, &all).unwrap();
            prop_assert!(ts.is_within(&tb));
            prop_assert!(tube_area(&ts) <= tube_area(&tb));
            for &i in &small {
                prop_assert!(contains(&ts, d.row(i)).unwrap());
            }
        }

        #[test]
        fn error_zero_iff_contained(d in arb_data(), k in 0usize..8) {
            let t = pointwise_bounds(&d, &[0]).unwrap();
            let row = d.row(k % d.len());
            let inside = contains(&t, row).unwrap();
            let err = cumulative_error(&t, row).unwrap();
            prop_assert_eq!(inside, err == 0.0);
        }

        #[test]
        fn area_permutation_invariant(d in arb_data()) {
            let fwd: Vec<usize> = (0..d.len()).collect();
            let rev: Vec<usize> = fwd.iter().rev().copied().collect();
            prop_assert_eq!(
                tube_area(&pointwise_bounds(&d, &fwd).unwrap()),
                tube_area(&pointwise_bounds(&d, &rev).unwrap())
            );
        }
    }
}
