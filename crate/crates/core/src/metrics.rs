//! Accuracy, precision against a constant-velocity reach, cumulative error
//! and accuracy/precision trade-off curves.

use std::collections::BTreeMap;
use std::fmt::Debug;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::SweepResult;
use crate::store::ChannelDataset;
use crate::tube::{contains, cumulative_error, GeometryError, Tube};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no tube for mode {0}")]
    MissingTubeForMode(String),
    #[error("validation set is empty")]
    EmptyValidationSet,
    #[error("negative speed {0}")]
    NegativeSpeed(f64),
    #[error("every validation sample has zero speed")]
    ZeroBaselineArea,
    #[error("sweeps do not share an alpha grid")]
    GridMismatch,
    #[error("expected {expected} entries, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn check_len(expected: usize, found: usize) -> Result<(), MetricsError> {
    if expected != found {
        return Err(MetricsError::LengthMismatch { expected, found });
    }
    Ok(())
}

fn tube_for<'a, K: Ord + Debug>(tubes: &'a BTreeMap<K, Tube>, mode: &K) -> Result<&'a Tube, MetricsError> {
    tubes
        .get(mode)
        .ok_or_else(|| MetricsError::MissingTubeForMode(format!("{mode:?}")))
}

/// Fraction of validation trajectories inside the tube of their assigned
/// mode.
pub fn accuracy<K: Ord + Debug>(
    validation: &ChannelDataset,
    tubes: &BTreeMap<K, Tube>,
    theta: &[K],
) -> Result<f64, MetricsError> {
    if validation.is_empty() {
        return Err(MetricsError::EmptyValidationSet);
    }
    check_len(validation.len(), theta.len())?;
    let mut hits = 0usize;
    for (i, mode) in theta.iter().enumerate() {
        if contains(tube_for(tubes, mode)?, validation.row(i))? {
            hits += 1;
        }
    }
    Ok(hits as f64 / validation.len() as f64)
}

/// Mean cumulative excursion outside the assigned tube.
pub fn mean_cumulative_error<K: Ord + Debug>(
    validation: &ChannelDataset,
    tubes: &BTreeMap<K, Tube>,
    theta: &[K],
) -> Result<f64, MetricsError> {
    if validation.is_empty() {
        return Err(MetricsError::EmptyValidationSet);
    }
    check_len(validation.len(), theta.len())?;
    let mut total = 0.0;
    for (i, mode) in theta.iter().enumerate() {
        total += cumulative_error(tube_for(tubes, mode)?, validation.row(i))?;
    }
    Ok(total / validation.len() as f64)
}

/// Reach of a vehicle moving at speed `v` in any direction: at step `t`
/// each position channel spans `[-v t dt, v t dt]`. Two channels, unit
/// weights.
pub fn constant_velocity_set(v: f64, horizon: usize, dt: f64) -> Result<Tube, MetricsError> {
    constant_velocity_set_weighted(v, horizon, dt, &[1.0, 1.0])
}

pub fn constant_velocity_set_weighted(v: f64, horizon: usize, dt: f64, weights: &[f64]) -> Result<Tube, MetricsError> {
    if !(v >= 0.0) {
        return Err(MetricsError::NegativeSpeed(v));
    }
    let reach: Vec<f64> = (0..=horizon).map(|t| v * t as f64 * dt).collect();
    let lower: Vec<f64> = reach.iter().map(|r| -r).collect();
    let n_c = weights.len();
    let names = ["x", "y"];
    let channels = (0..n_c)
        .map(|c| names.get(c).map_or_else(|| format!("p{c}"), |s| s.to_string()))
        .collect();
    Ok(Tube::new(
        channels,
        dt,
        weights.to_vec(),
        vec![reach; n_c],
        vec![lower; n_c],
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Precision {
    pub value: f64,
    /// Samples whose shrinkage ratio fell outside [0, 1] and was clamped.
    pub clamped: usize,
    /// Zero-speed samples left out of the mean.
    pub excluded_zero_speed: usize,
}

/// Mean of `1 - λ(tube) / λ(reach(v_j))` over samples with `v_j > 0`, each
/// term clamped to [0, 1]. The reach uses the tube's horizon, time step and
/// channel weights.
pub fn precision<K: Ord + Debug>(
    validation: &ChannelDataset,
    tubes: &BTreeMap<K, Tube>,
    theta: &[K],
    speeds: &[f64],
) -> Result<Precision, MetricsError> {
    if validation.is_empty() {
        return Err(MetricsError::EmptyValidationSet);
    }
    check_len(validation.len(), theta.len())?;
    check_len(validation.len(), speeds.len())?;
    let (mut sum, mut used, mut clamped, mut zero) = (0.0, 0usize, 0usize, 0usize);
    for (mode, &v) in theta.iter().zip(speeds) {
        if v < 0.0 {
            return Err(MetricsError::NegativeSpeed(v));
        }
        let tube = tube_for(tubes, mode)?;
        if v == 0.0 {
            zero += 1;
            continue;
        }
        let reach = constant_velocity_set_weighted(v, tube.steps() - 1, tube.dt, &tube.weights)?;
        let ratio = 1.0 - tube.area() / reach.area();
        if !(0.0..=1.0).contains(&ratio) {
            clamped += 1;
        }
        sum += ratio.clamp(0.0, 1.0);
        used += 1;
    }
    if used == 0 {
        return Err(MetricsError::ZeroBaselineArea);
    }
    if clamped > 0 {
        log::warn!("{clamped} precision terms clamped to [0, 1]");
    }
    Ok(Precision {
        value: sum / used as f64,
        clamped,
        excluded_zero_speed: zero,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub alpha: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub cumulative_error: f64,
    /// Accuracy of uniform rejection at this α, which is α itself.
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub n_validation: usize,
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "mode,alpha,accuracy,precision,cumulative_error";

    /// Rows without header, `mode,alpha,accuracy,precision,cumulative_error`.
    pub fn csv_rows(&self) -> String {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{}\n",
                    self.mode, r.alpha, r.accuracy, r.precision, r.cumulative_error
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }

    /// `alpha,accuracy,precision,baseline` for the trade-off plot.
    pub fn tradeoff_csv(&self) -> String {
        let mut out = String::from("alpha,accuracy,precision,baseline\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.alpha, r.accuracy, r.precision, r.baseline));
        }
        out
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.accuracy).collect()
    }

    pub fn precisions(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.precision).collect()
    }
}

/// One report row per α of the per-mode sweeps (which must share a grid),
/// evaluating each validation sample against the tube of its assigned mode.
pub fn tradeoff_curve<K: Ord + Debug + Clone>(
    label: &str,
    validation: &ChannelDataset,
    sweeps: &BTreeMap<K, SweepResult>,
    theta: &[K],
    speeds: &[f64],
) -> Result<MetricsReport, MetricsError> {
    let first = sweeps.values().next().ok_or(MetricsError::GridMismatch)?;
    if sweeps.values().any(|s| s.alphas != first.alphas) {
        return Err(MetricsError::GridMismatch);
    }
    let mut rows = Vec::with_capacity(first.alphas.len());
    for (j, &alpha) in first.alphas.iter().enumerate() {
        let tubes: BTreeMap<K, Tube> = sweeps
            .iter()
            .map(|(k, s)| (k.clone(), s.solutions[j].tube.clone()))
            .collect();
        rows.push(MetricsRow {
            alpha,
            accuracy: accuracy(validation, &tubes, theta)?,
            precision: precision(validation, &tubes, theta, speeds)?.value,
            cumulative_error: mean_cumulative_error(validation, &tubes, theta)?,
            baseline: alpha,
        });
    }
    Ok(MetricsReport {
        mode: label.to_string(),
        n_validation: validation.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tube::pointwise_bounds;

    fn rows(r: &[Vec<f64>]) -> ChannelDataset {
        ChannelDataset::from_rows(r, 1.0).unwrap()
    }

    #[test]
    fn reach_area() {
        let t = constant_velocity_set(1.0, 2, 1.0).unwrap();
        assert_eq!(t.area(), 12.0);
        assert_eq!(constant_velocity_set(0.0, 2, 1.0).unwrap().area(), 0.0);
        assert_eq!(constant_velocity_set(2.0, 2, 1.0).unwrap().area(), 24.0);
        assert!(matches!(constant_velocity_set(-1.0, 2, 1.0), Err(MetricsError::NegativeSpeed(_))));
    }

    #[test]
    fn accuracy_counts() {
        let d = rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let t = pointwise_bounds(&d, &[0, 1]).unwrap();
        let tubes = BTreeMap::from([("k", t.clone())]);
        assert_eq!(accuracy(&d, &tubes, &["k"; 4]).unwrap(), 0.5);
        let all = BTreeMap::from([("k", pointwise_bounds(&d, &[0, 1, 2, 3]).unwrap())]);
        assert_eq!(accuracy(&d, &all, &["k"; 4]).unwrap(), 1.0);
        assert!(matches!(
            accuracy(&d, &tubes, &["k", "k", "k", "c"]),
            Err(MetricsError::MissingTubeForMode(_))
        ));
    }

    fn two_channel(area_fraction: f64) -> Tube {
        // reach at v = 1, T = 2, dt = 1 has area 12
        let r = constant_velocity_set(1.0, 2, 1.0).unwrap();
        let f = area_fraction;
        Tube::new(
            r.channels.clone(),
            1.0,
            vec![1.0, 1.0],
            r.upper.iter().map(|u| u.iter().map(|v| v * f).collect()).collect(),
            r.lower.iter().map(|u| u.iter().map(|v| v * f).collect()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn precision_limits() {
        let d = ChannelDataset::from_values(vec!["a".into()], vec!["x".into(), "y".into()], 3, 1.0, vec![0.0; 6]).unwrap();
        for (f, expect) in [(0.0, 1.0), (1.0, 0.0), (0.5, 0.5)] {
            let tubes = BTreeMap::from([(0, two_channel(f))]);
            let p = precision(&d, &tubes, &[0], &[1.0]).unwrap();
            assert!((p.value - expect).abs() < 1e-12);
            assert_eq!(p.clamped, 0);
        }
        let tubes = BTreeMap::from([(0, two_channel(2.0))]);
        let p = precision(&d, &tubes, &[0], &[1.0]).unwrap();
        assert_eq!((p.value, p.clamped), (0.0, 1));
        assert!(matches!(precision(&d, &tubes, &[0], &[0.0]), Err(MetricsError::ZeroBaselineArea)));
    }

    #[test]
    fn report_csv() {
        let r = MetricsReport {
            mode: "lane_keeping".into(),
            n_validation: 4,
            rows: vec![MetricsRow {
                alpha: 0.9,
                accuracy: 0.75,
                precision: 0.5,
                cumulative_error: 0.25,
                baseline: 0.9,
            }],
        };
        assert_eq!(
            r.to_csv(),
            "mode,alpha,accuracy,precision,cumulative_error\nlane_keeping,0.9,0.75,0.5,0.25\n"
        );
    }
}
