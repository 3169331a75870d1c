//! Mode identification: blinker-derived labels and a max-margin linear
//! classifier over environment features.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment feature names, in column order.
pub const FEATURE_NAMES: [&str; 5] = ["lead_gap", "rel_speed", "ego_speed", "lane_offset", "adjacent_gap"];

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("expected {expected} entries, got {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("feature dimension {found} does not match the model's {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite feature value")]
    NonFinite,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown mode label {0:?}")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvObservation {
    pub t: usize,
    pub features: Vec<f64>,
}

impl EnvObservation {
    pub fn new(t: usize, features: Vec<f64>) -> Self {
        EnvObservation { t, features }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    LaneKeeping,
    LaneChanging,
}

impl ModeLabel {
    pub const ALL: [ModeLabel; 2] = [ModeLabel::LaneKeeping, ModeLabel::LaneChanging];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeLabel::LaneKeeping => "lane_keeping",
            ModeLabel::LaneChanging => "lane_changing",
        }
    }

    fn sign(self) -> f64 {
        match self {
            ModeLabel::LaneKeeping => -1.0,
            ModeLabel::LaneChanging => 1.0,
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeLabel {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lane_keeping" => Ok(ModeLabel::LaneKeeping),
            "lane_changing" => Ok(ModeLabel::LaneChanging),
            other => Err(ClassifierError::UnknownLabel(other.to_string())),
        }
    }
}

/// Per-step modes from a blinker signal: lane keeping before the first
/// active step, lane changing from it to the end of the window.
pub fn label_transitions(blinker: &[bool], horizon: usize) -> Result<Vec<ModeLabel>, ClassifierError> {
    if blinker.len() != horizon + 1 {
        return Err(ClassifierError::LengthMismatch {
            expected: horizon + 1,
            found: blinker.len(),
        });
    }
    let onset = blinker.iter().position(|&b| b).unwrap_or(blinker.len());
    Ok((0..blinker.len())
        .map(|t| if t >= onset { ModeLabel::LaneChanging } else { ModeLabel::LaneKeeping })
        .collect())
}

/// A trajectory is lane changing if any of its steps is.
pub fn trajectory_mode(steps: &[ModeLabel]) -> ModeLabel {
    if steps.contains(&ModeLabel::LaneChanging) {
        ModeLabel::LaneChanging
    } else {
        ModeLabel::LaneKeeping
    }
}

/// Linear decision boundary over standardized features:
/// `score(x) = w · ((x - mean) / scale) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_scales: Vec<f64>,
    /// Geometric margin `1 / |w|` in standardized units.
    pub margin: f64,
    pub training: TrainingInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingInfo {
    pub examples: usize,
    pub penalty: f64,
    pub iterations: usize,
    pub objective: f64,
    pub duality_gap: f64,
}

impl Hyperplane {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, features: &[f64]) -> Result<f64, ClassifierError> {
        if features.len() != self.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim(),
                found: features.len(),
            });
        }
        let mut s = self.bias;
        for j in 0..self.dim() {
            s += self.weights[j] * (features[j] - self.feature_means[j]) / self.feature_scales[j];
        }
        Ok(s)
    }
}

/// Sign of the score; a score of exactly zero is lane keeping.
pub fn classify(h: &Hyperplane, e: &EnvObservation) -> Result<ModeLabel, ClassifierError> {
    let s = h.score(&e.features)?;
    Ok(if s > 0.0 { ModeLabel::LaneChanging } else { ModeLabel::LaneKeeping })
}

/// Iteration cap for [`train_max_margin`].
pub const MAX_ITERATIONS: usize = 2_000_000;

/// Soft-margin linear SVM: minimizes `½|w|² + C Σ max(0, 1 - y (w·x + b))`
/// over standardized features, with `C = penalty`.
///
/// Solved in the dual by sequential minimal optimization with
/// maximal-violating-pair selection. The KKT tolerance is tightened until
/// the duality gap is at most `tol * max(1, objective)`, which bounds the
/// distance of the returned objective from the optimum.
pub fn train_max_margin(
    examples: &[(EnvObservation, ModeLabel)],
    penalty: f64,
    tol: f64,
) -> Result<Hyperplane, ClassifierError> {
    if !(penalty.is_finite() && penalty > 0.0) {
        return Err(ClassifierError::InvalidParameter(format!("penalty = {penalty}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(ClassifierError::InvalidParameter(format!("tol = {tol}")));
    }
    let first = examples.first().ok_or(ClassifierError::SingleClass)?;
    let dim = first.0.features.len();
    for (e, _) in examples {
        if e.features.len() != dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: dim,
                found: e.features.len(),
            });
        }
        if e.features.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
    }
    if examples.iter().all(|(_, l)| *l == first.1) {
        return Err(ClassifierError::SingleClass);
    }

    let n = examples.len();
    let mut means = vec![0.0; dim];
    for (e, _) in examples {
        for j in 0..dim {
            means[j] += e.features[j];
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut scales = vec![0.0; dim];
    for (e, _) in examples {
        for j in 0..dim {
            scales[j] += (e.features[j] - means[j]).powi(2);
        }
    }
    for s in &mut scales {
        *s = (*s / n as f64).sqrt();
        if *s <= 0.0 {
            *s = 1.0;
        }
    }
    let x: Vec<f64> = examples
        .iter()
        .flat_map(|(e, _)| (0..dim).map(|j| (e.features[j] - means[j]) / scales[j]).collect::<Vec<_>>())
        .collect();
    let y: Vec<f64> = examples.iter().map(|(_, l)| l.sign()).collect();

    let smo = Smo::new(&x, &y, dim, penalty).run(tol)?;
    let norm = smo.w.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(Hyperplane {
        margin: if norm > 0.0 { 1.0 / norm } else { f64::INFINITY },
        weights: smo.w,
        bias: smo.b,
        feature_means: means,
        feature_scales: scales,
        training: TrainingInfo {
            examples: n,
            penalty,
            iterations: smo.iterations,
            objective: smo.primal,
            duality_gap: smo.gap,
        },
    })
}

struct Smo<'a> {
    x: &'a [f64],
    y: &'a [f64],
    dim: usize,
    c: f64,
    alpha: Vec<f64>,
    /// Gradient of the dual objective, `Qα - 1`.
    grad: Vec<f64>,
    w: Vec<f64>,
    b: f64,
    iterations: usize,
    primal: f64,
    gap: f64,
}

impl<'a> Smo<'a> {
    fn new(x: &'a [f64], y: &'a [f64], dim: usize, c: f64) -> Self {
        let n = y.len();
        Smo {
            x,
            y,
            dim,
            c,
            alpha: vec![0.0; n],
            grad: vec![-1.0; n],
            w: vec![0.0; dim],
            b: 0.0,
            iterations: 0,
            primal: 0.0,
            gap: 0.0,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn dot(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).map(|(a, b)| a * b).sum()
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < 0.0 && self.alpha[t] < self.c) || (self.y[t] > 0.0 && self.alpha[t] > 0.0)
    }

    /// Maximal violating pair and the current violation `m - M`.
    fn select(&self) -> (usize, usize, f64) {
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..self.y.len() {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && v > gmax {
                gmax = v;
                i = t;
            }
            if self.in_low(t) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        (i, j, gmax - gmin)
    }

    fn step(&mut self, i: usize, j: usize) {
        let (yi, yj, c) = (self.y[i], self.y[j], self.c);
        let quad = (self.dot(i, i) + self.dot(j, j) - 2.0 * self.dot(i, j)).max(1e-12);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj);
        if yi != yj {
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = old_i - old_j;
            ai = old_i + delta;
            aj = old_j + delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = old_i + old_j;
            ai = old_i - delta;
            aj = old_j + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (yi * (ai - old_i), yj * (aj - old_j));
        let mut v = vec![0.0; self.dim];
        for k in 0..self.dim {
            v[k] = di * self.x[i * self.dim + k] + dj * self.x[j * self.dim + k];
            self.w[k] += v[k];
        }
        for t in 0..self.y.len() {
            let s: f64 = self.row(t).iter().zip(&v).map(|(a, b)| a * b).sum();
            self.grad[t] += self.y[t] * s;
        }
    }

    fn bias(&self) -> f64 {
        let (mut sum, mut free) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..self.y.len() {
            let yg = self.y[t] * self.grad[t];
            if self.alpha[t] > 0.0 && self.alpha[t] < self.c {
                sum += yg;
                free += 1;
            } else if (self.alpha[t] >= self.c && self.y[t] < 0.0) || (self.alpha[t] <= 0.0 && self.y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if free > 0 { sum / free as f64 } else { (ub + lb) / 2.0 };
        -rho
    }

    fn objectives(&self) -> (f64, f64) {
        let half_norm = 0.5 * self.w.iter().map(|v| v * v).sum::<f64>();
        let mut hinge = 0.0;
        for t in 0..self.y.len() {
            let s: f64 = self.row(t).iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>() + self.b;
            hinge += (1.0 - self.y[t] * s).max(0.0);
        }
        let primal = half_norm + self.c * hinge;
        let dual = self.alpha.iter().sum::<f64>() - half_norm;
        (primal, dual)
    }

    fn run(mut self, tol: f64) -> Result<Self, ClassifierError> {
        let mut eps = 1e-3;
        loop {
            loop {
                let (i, j, violation) = self.select();
                if i == usize::MAX || j == usize::MAX || violation < eps {
                    break;
                }
                self.iterations += 1;
                if self.iterations > MAX_ITERATIONS {
                    return Err(ClassifierError::NoConvergence(MAX_ITERATIONS));
                }
                self.step(i, j);
            }
            self.b = self.bias();
            let (primal, dual) = self.objectives();
            self.primal = primal;
            self.gap = (primal - dual).max(0.0);
            if self.gap <= tol * primal.abs().max(1.0) {
                return Ok(self);
            }
            eps /= 10.0;
            if eps < 1e-12 {
                return Err(ClassifierError::NoConvergence(self.iterations));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(f: &[f64], l: ModeLabel) -> (EnvObservation, ModeLabel) {
        (EnvObservation::new(0, f.to_vec()), l)
    }

    use ModeLabel::{LaneChanging as Change, LaneKeeping as Keep};

    #[test]
    fn transitions() {
        let mut b = vec![false; 10];
        b[5] = true;
        b[6] = true;
        let l = label_transitions(&b, 9).unwrap();
        assert!(l[..5].iter().all(|&m| m == Keep) && l[5..].iter().all(|&m| m == Change));
        assert!(label_transitions(&[false; 4], 3).unwrap().iter().all(|&m| m == Keep));
        assert!(label_transitions(&[true, false, false], 2).unwrap().iter().all(|&m| m == Change));
        assert!(matches!(
            label_transitions(&[false; 3], 3),
            Err(ClassifierError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_points() {
        let h = train_max_margin(&[ex(&[-1.0], Keep), ex(&[1.0], Change)], 1.0, 1e-6).unwrap();
        assert!(h.score(&[0.0]).unwrap().abs() < 1e-9);
        assert_eq!(classify(&h, &EnvObservation::new(0, vec![0.0])).unwrap(), Keep);
        assert_eq!(classify(&h, &EnvObservation::new(0, vec![-5.0])).unwrap(), Keep);
        assert_eq!(classify(&h, &EnvObservation::new(0, vec![0.3])).unwrap(), Change);
        assert!(matches!(
            classify(&h, &EnvObservation::new(0, vec![0.0, 1.0])),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn separable_2d() {
        let mut data = Vec::new();
        for i in 0..20 {
            let a = i as f64 * 0.3;
            data.push(ex(&[a, 2.0 + (a * 1.7).sin()], Change));
            data.push(ex(&[a, -2.0 + (a * 1.3).cos()], Keep));
        }
        let h = train_max_margin(&data, 10.0, 1e-6).unwrap();
        for (e, l) in &data {
            assert_eq!(classify(&h, e).unwrap(), *l);
            assert!(h.score(&e.features).unwrap() * l.sign() > 0.0);
        }
        assert!(h.margin > 0.0);
        assert!(h.training.duality_gap <= 1e-6 * h.training.objective.max(1.0));
    }

    #[test]
    fn single_class() {
        let data = vec![ex(&[0.0], Keep), ex(&[1.0], Keep)];
        assert_eq!(train_max_margin(&data, 1.0, 1e-3), Err(ClassifierError::SingleClass));
    }

    #[test]
    fn label_strings() {
        for l in ModeLabel::ALL {
            assert_eq!(l.as_str().parse::<ModeLabel>().unwrap(), l);
        }
        assert!("drifting".parse::<ModeLabel>().is_err());
    }
}
