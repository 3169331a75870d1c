//! Known-distribution checks: seeded sampling, analytic quantile intervals,
//! area-reduction curves and typical-set detection.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gumbel, LogNormal, Normal, Uniform};
use thiserror::Error;

use crate::solver::{SolveError, SweepResult};
use crate::store::ChannelDataset;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),
    #[error("alpha = {0} is outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("sweeps do not share a grid starting at alpha = 1")]
    GridMismatch,
    #[error("curve needs at least 3 points, got {0}")]
    CurveTooShort(usize),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std_dev: f64 },
    /// Parameters of the underlying normal.
    Lognormal { mu: f64, sigma: f64 },
    /// Gumbel (type I extreme value).
    ExtremeValue { location: f64, scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    #[serde(flatten)]
    pub kind: DistributionKind,
    pub n: usize,
    pub seed: u64,
}

enum Quantile {
    Uniform(Uniform),
    Normal(Normal),
    Lognormal(LogNormal),
    Gumbel(Gumbel),
}

impl Quantile {
    fn at(&self, p: f64) -> f64 {
        match self {
            Quantile::Uniform(d) => d.inverse_cdf(p),
            Quantile::Normal(d) => d.inverse_cdf(p),
            Quantile::Lognormal(d) => d.inverse_cdf(p),
            Quantile::Gumbel(d) => d.inverse_cdf(p),
        }
    }
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, n: usize, seed: u64) -> Self {
        DistributionSpec { kind, n, seed }
    }

    pub fn standard_normal(n: usize, seed: u64) -> Self {
        Self::new(DistributionKind::Normal { mean: 0.0, std_dev: 1.0 }, n, seed)
    }

    pub fn validate(&self) -> Result<(), DistError> {
        if self.n == 0 {
            return Err(DistError::InvalidParameters("n must be at least 1".into()));
        }
        self.quantile().map(|_| ())
    }

    fn quantile(&self) -> Result<Quantile, DistError> {
        let bad = |e: &dyn std::fmt::Display| DistError::InvalidParameters(e.to_string());
        Ok(match self.kind {
            DistributionKind::Uniform { low, high } => Quantile::Uniform(Uniform::new(low, high).map_err(|e| bad(&e))?),
            DistributionKind::Normal { mean, std_dev } => {
                Quantile::Normal(Normal::new(mean, std_dev).map_err(|e| bad(&e))?)
            }
            DistributionKind::Lognormal { mu, sigma } => {
                Quantile::Lognormal(LogNormal::new(mu, sigma).map_err(|e| bad(&e))?)
            }
            DistributionKind::ExtremeValue { location, scale } => {
                Quantile::Gumbel(Gumbel::new(location, scale).map_err(|e| bad(&e))?)
            }
        })
    }
}

/// Uniform variate in the open interval (0, 1) from the top 53 bits.
pub(crate) fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

pub(crate) fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    use statrs::function::erf::erfc_inv;
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * open_unit(rng))
}

/// `spec.n` one-channel trajectories of `horizon + 1` independent draws,
/// produced by inverse-CDF transform of a ChaCha8 stream. Draws are taken
/// trajectory by trajectory, step by step, so a given seed yields the same
/// values on every platform.
pub fn sample_dataset(spec: &DistributionSpec, horizon: usize) -> Result<ChannelDataset, DistError> {
    spec.validate()?;
    let q = spec.quantile()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let steps = horizon + 1;
    let values: Vec<f64> = (0..spec.n * steps).map(|_| q.at(open_unit(&mut rng))).collect();
    let ids = (0..spec.n).map(|i| format!("s{i}")).collect();
    ChannelDataset::from_values(ids, vec!["x".into()], steps, 1.0, values)
        .map_err(|e| DistError::InvalidParameters(e.to_string()))
}

/// Central interval `[Q((1 - α)/2), Q((1 + α)/2)]`.
pub fn quantile_interval(spec: &DistributionSpec, alpha: f64) -> Result<(f64, f64), DistError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(DistError::AlphaOutOfRange(alpha));
    }
    let q = spec.quantile()?;
    Ok((q.at((1.0 - alpha) / 2.0), q.at((1.0 + alpha) / 2.0)))
}

/// Normalized area reduction against rejection ratio, aggregated over
/// trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaReductionCurve {
    pub rejection_ratios: Vec<f64>,
    pub mean: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub trials: usize,
}

impl AreaReductionCurve {
    pub fn len(&self) -> usize {
        self.rejection_ratios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejection_ratios.is_empty()
    }

    /// CSV with header `rejection_ratio,mean_dA,min_dA,max_dA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rejection_ratio,mean_dA,min_dA,max_dA\n");
        for j in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.rejection_ratios[j], self.mean[j], self.min[j], self.max[j]
            ));
        }
        out
    }
}

/// `δA(α) = (A(1) - A(α)) / A(1)` for each trial's sweep, with `δA = 0` when
/// the full-coverage area is zero. Every sweep must use the same grid and
/// start at α = 1.
pub fn area_reduction_curve(sweeps: &[SweepResult]) -> Result<AreaReductionCurve, DistError> {
    let first = sweeps.first().ok_or(DistError::GridMismatch)?;
    if first.alphas.first() != Some(&1.0) || sweeps.iter().any(|s| s.alphas != first.alphas) {
        return Err(DistError::GridMismatch);
    }
    let len = first.alphas.len();
    let rejection_ratios: Vec<f64> = first.alphas.iter().map(|a| ((1.0 - a) * 1e9).round() / 1e9).collect();
    let mut mean = vec![0.0; len];
    let mut min = vec![f64::INFINITY; len];
    let mut max = vec![f64::NEG_INFINITY; len];
    for s in sweeps {
        let base = s.solutions[0].area;
        for (j, sol) in s.solutions.iter().enumerate() {
            let da = if base > 0.0 { ((base - sol.area) / base).clamp(0.0, 1.0) } else { 0.0 };
            mean[j] += da;
            min[j] = min[j].min(da);
            max[j] = max[j].max(da);
        }
    }
    for v in &mut mean {
        *v /= sweeps.len() as f64;
    }
    Ok(AreaReductionCurve {
        rejection_ratios,
        mean,
        min,
        max,
        trials: sweeps.len(),
    })
}

/// Smallest rejection ratio from which every later per-step gain in `δA`
/// stays below `slope_fraction` times the first step's gain. `None` when the
/// curve never flattens that much.
pub fn detect_typical_set(curve: &AreaReductionCurve, slope_fraction: f64) -> Result<Option<f64>, DistError> {
    if curve.len() < 3 {
        return Err(DistError::CurveTooShort(curve.len()));
    }
    if !(slope_fraction > 0.0 && slope_fraction < 1.0) {
        return Err(DistError::InvalidParameters(format!("slope_fraction = {slope_fraction}")));
    }
    let gains: Vec<f64> = curve.mean.windows(2).map(|w| w[1] - w[0]).collect();
    let limit = slope_fraction * gains[0];
    let mut start = None;
    for j in (0..gains.len()).rev() {
        if gains[j] < limit {
            start = Some(j);
        } else {
            break;
        }
    }
    Ok(start.map(|j| curve.rejection_ratios[j]))
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r²)`.
/// `r²` is 1 for a perfectly flat `y`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{sweep, SolveConfig};

    fn curve(mean: Vec<f64>) -> AreaReductionCurve {
        let len = mean.len();
        AreaReductionCurve {
            rejection_ratios: (0..len).map(|j| j as f64 * 0.05).collect(),
            min: mean.clone(),
            max: mean.clone(),
            mean,
            trials: 1,
        }
    }

    #[test]
    fn uniform_support_and_determinism() {
        let spec = DistributionSpec::new(DistributionKind::Uniform { low: 0.0, high: 1.0 }, 1000, 3);
        let a = sample_dataset(&spec, 0).unwrap();
        assert_eq!(a.len(), 1000);
        assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a, sample_dataset(&spec, 0).unwrap());
        let other = sample_dataset(&DistributionSpec { seed: 4, ..spec }, 0).unwrap();
        assert_ne!(a.values(), other.values());
    }

    #[test]
    fn bad_parameters() {
        let spec = DistributionSpec::new(DistributionKind::Lognormal { mu: 0.0, sigma: -1.0 }, 10, 0);
        assert!(matches!(sample_dataset(&spec, 0), Err(DistError::InvalidParameters(_))));
        let spec = DistributionSpec::new(DistributionKind::Uniform { low: 1.0, high: 0.0 }, 10, 0);
        assert!(spec.validate().is_err());
        assert!(DistributionSpec::standard_normal(0, 0).validate().is_err());
    }

    #[test]
    fn quantiles() {
        let (lo, hi) = quantile_interval(&DistributionSpec::standard_normal(1, 0), 0.6827).unwrap();
        assert!((lo + 1.0).abs() < 1e-3 && (hi - 1.0).abs() < 1e-3);
        let (lo, hi) = quantile_interval(&DistributionSpec::standard_normal(1, 0), 0.9545).unwrap();
        assert!((lo + 2.0).abs() < 1e-3 && (hi - 2.0).abs() < 1e-3);
        let u = DistributionSpec::new(DistributionKind::Uniform { low: 0.0, high: 1.0 }, 1, 0);
        let (lo, hi) = quantile_interval(&u, 0.5).unwrap();
        assert!((lo - 0.25).abs() < 1e-12 && (hi - 0.75).abs() < 1e-12);
        assert!(quantile_interval(&u, 1.0).is_err());
    }

    #[test]
    fn gumbel_median() {
        let g = DistributionSpec::new(DistributionKind::ExtremeValue { location: 0.0, scale: 1.0 }, 1, 0);
        let (lo, hi) = quantile_interval(&g, 1e-9).unwrap();
        let median = -(2f64.ln()).ln();
        assert!((lo - median).abs() < 1e-6 && (hi - median).abs() < 1e-6);
    }

    #[test]
    fn constant_data_has_flat_curve() {
        let d = ChannelDataset::from_rows(&vec![vec![2.0, 2.0]; 10], 1.0).unwrap();
        let s = sweep(&d, &[1.0, 0.9, 0.8], &SolveConfig::default(), false).unwrap();
        let c = area_reduction_curve(&[s]).unwrap();
        assert_eq!(c.mean, vec![0.0; 3]);
    }

    #[test]
    fn grid_mismatch() {
        let d = ChannelDataset::from_rows(&[vec![0.0], vec![1.0], vec![3.0]], 1.0).unwrap();
        let a = sweep(&d, &[1.0, 0.6], &SolveConfig::default(), false).unwrap();
        let b = sweep(&d, &[1.0, 0.5], &SolveConfig::default(), false).unwrap();
        assert!(matches!(area_reduction_curve(&[a, b]), Err(DistError::GridMismatch)));
        let c = sweep(&d, &[0.9, 0.6], &SolveConfig::default(), false).unwrap();
        assert!(matches!(area_reduction_curve(&[c]), Err(DistError::GridMismatch)));
    }

    #[test]
    fn typical_set_rule() {
        let linear = curve((0..8).map(|j| j as f64 * 0.1).collect());
        assert_eq!(detect_typical_set(&linear, 0.2).unwrap(), None);
        let flat = curve(vec![0.0, 0.3, 0.5, 0.5, 0.5, 0.5]);
        assert_eq!(detect_typical_set(&flat, 0.2).unwrap(), Some(0.1));
        assert!(matches!(
            detect_typical_set(&curve(vec![0.0, 1.0]), 0.2),
            Err(DistError::CurveTooShort(2))
        ));
    }

    #[test]
    fn fit() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let (s, b, r2) = linear_fit(&x, &[1.0, 3.0, 5.0, 7.0]);
        assert!((s - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
