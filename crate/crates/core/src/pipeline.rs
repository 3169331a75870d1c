//! End-to-end compositions: known-distribution checks, the exact vs
//! leave-k-out timing table, and the synthetic driving pipeline (simulate,
//! split, train the mode classifier, per-mode sweeps, metrics).

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{classify, train_max_margin, ClassifierError, EnvObservation, Hyperplane, ModeLabel};
use crate::dist::{area_reduction_curve, quantile_interval, sample_dataset, AreaReductionCurve, DistError, DistributionSpec};
use crate::metrics::{tradeoff_curve, MetricsError, MetricsReport};
use crate::solver::{
    default_alpha_grid, required_count, solve_exact, solve_naive_limited, sweep, ErsInstance, SolveConfig, SolveError,
    SweepResult,
};
use crate::store::{center_dataset, project_channels, ChannelDataset, StoreError};
use crate::synth::{generate_grid, logs_to_dataset, simulate_all, DriverProfile, ScenarioLog, ScenarioParams, SynthError, Variations};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// ERS interval of scalar samples against the analytic central interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCheck {
    pub alpha: f64,
    pub ers: (f64, f64),
    pub quantile: (f64, f64),
    pub area: f64,
}

/// Solves one point-sample (single step) instance at `alpha` and reports the
/// retained interval next to the quantile interval.
pub fn sigma_check(spec: &DistributionSpec, alpha: f64, cfg: &SolveConfig) -> Result<SigmaCheck, PipelineError> {
    let data = sample_dataset(spec, 0)?;
    let quantile = quantile_interval(spec, alpha)?;
    let sol = solve_exact(&ErsInstance::new(data, alpha)?, cfg)?;
    Ok(SigmaCheck {
        alpha,
        ers: (sol.tube.lower[0][0], sol.tube.upper[0][0]),
        quantile,
        area: sol.area,
    })
}

/// Area-reduction curve over `trials` seeds (`spec.seed`, `spec.seed + 1`,
/// ...), each an exact sweep of point samples.
pub fn distribution_trials(
    spec: &DistributionSpec,
    trials: usize,
    alphas: &[f64],
    accelerated: bool,
    cfg: &SolveConfig,
) -> Result<(AreaReductionCurve, Vec<SweepResult>), PipelineError> {
    if trials == 0 {
        return Err(PipelineError::Config("trials must be positive".into()));
    }
    let mut sweeps = Vec::with_capacity(trials);
    for t in 0..trials {
        let s = DistributionSpec {
            seed: spec.seed.wrapping_add(t as u64),
            ..spec.clone()
        };
        sweeps.push(sweep(&sample_dataset(&s, 0)?, alphas, cfg, accelerated)?);
    }
    Ok((area_reduction_curve(&sweeps)?, sweeps))
}

/// Centered position channels of the ego trajectories.
pub fn position_dataset(logs: &[ScenarioLog]) -> Result<ChannelDataset, PipelineError> {
    let d = center_dataset(&logs_to_dataset(logs)?);
    let pos = d.schema().position.clone();
    Ok(project_channels(&d, &pos)?)
}

/// Lane-keeping logs for timing runs: no surrounding traffic, so no lane
/// changes, with varied speeds and the usual noise and outliers.
pub fn lane_keeping_logs(n: usize, horizon: usize, seed: u64) -> Result<Vec<ScenarioLog>, PipelineError> {
    let base = ScenarioParams {
        vehicle_count: 0,
        seed,
        ..ScenarioParams::default()
    };
    let speeds = [15.0, 16.0, 17.0, 18.0, 19.0, 20.0];
    let grid = generate_grid(
        &base,
        &Variations {
            ego_speed: Some(speeds.to_vec()),
            replicates: Some(n.div_ceil(speeds.len()).max(1)),
            ..Variations::default()
        },
    )?;
    // interleave so any prefix covers every speed
    let per = grid.len() / speeds.len();
    let params: Vec<ScenarioParams> = (0..n).map(|i| grid[(i % speeds.len()) * per + i / speeds.len()].clone()).collect();
    Ok(simulate_all(&params, horizon, crate::synth::DEFAULT_DT)?)
}

/// One (N, k) cell of the timing table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub n: usize,
    pub k: usize,
    pub exact_s: Option<f64>,
    pub exact_area: Option<f64>,
    pub exact_proven: bool,
    pub naive_s: Option<f64>,
    pub naive_area: Option<f64>,
    /// `None` when the enumeration did not finish.
    pub agree: Option<bool>,
}

/// Times [`solve_exact`] and the leave-k-out enumeration on the first `n`
/// trajectories of `data` with `k` rejections. The enumeration is skipped
/// (recorded as not finished) when `naive_limit` is zero.
pub fn bench_cell(data: &ChannelDataset, n: usize, k: usize, cfg: &SolveConfig, naive_limit: Duration) -> Result<BenchCell, PipelineError> {
    if n > data.len() || k >= n {
        return Err(PipelineError::Config(format!("cannot take N = {n}, k = {k} from {} trajectories", data.len())));
    }
    let idx: Vec<usize> = (0..n).collect();
    let inst = ErsInstance::with_count(data.subset(&idx), n - k)?;
    let start = Instant::now();
    let (exact_s, exact_area, exact_proven) = match solve_exact(&inst, cfg) {
        Ok(s) => (Some(start.elapsed().as_secs_f64()), Some(s.area), s.proven_optimal),
        Err(SolveError::NoIncumbent) => (None, None, false),
        Err(e) => return Err(e.into()),
    };
    let (naive_s, naive_area) = if naive_limit.is_zero() {
        (None, None)
    } else {
        let start = Instant::now();
        match solve_naive_limited(&inst, naive_limit) {
            Ok(s) => (Some(start.elapsed().as_secs_f64()), Some(s.area)),
            Err(SolveError::Timeout(_) | SolveError::CombinatorialBlowup { .. }) => (None, None),
            Err(e) => return Err(e.into()),
        }
    };
    let agree = match (exact_area, naive_area) {
        (Some(a), Some(b)) => Some(a == b),
        _ => None,
    };
    Ok(BenchCell {
        n,
        k,
        exact_s,
        exact_area,
        exact_proven,
        naive_s,
        naive_area,
        agree,
    })
}

/// Table with one row per (N, method) and one column per k; unfinished runs
/// print as `---`.
pub fn bench_table_csv(cells: &[BenchCell]) -> String {
    let mut ks: Vec<usize> = cells.iter().map(|c| c.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut out = String::from("n,method");
    for k in &ks {
        out.push_str(&format!(",k={k}"));
    }
    out.push('\n');
    let fmt = |v: Option<f64>| v.map_or_else(|| "---".to_string(), |s| format!("{s:.3}"));
    for &n in &ns {
        for (method, pick) in [("ers", 0), ("leave_k_out", 1)] {
            out.push_str(&format!("{n},{method}"));
            for &k in &ks {
                let cell = cells.iter().find(|c| c.n == n && c.k == k);
                let v = cell.and_then(|c| if pick == 0 { c.exact_s } else { c.naive_s });
                out.push_str(&format!(",{}", if cell.is_some() { fmt(v) } else { String::new() }));
            }
            out.push('\n');
        }
    }
    out
}

/// Deterministic train/holdout split: a seeded shuffle, the first
/// `round(fraction * n)` indices held out. Both lists come back sorted.
pub fn split_holdout(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PipelineError::Config(format!("holdout fraction {fraction} outside (0, 1)")));
    }
    let n_test = (fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(PipelineError::Config(format!("holdout of {n_test} out of {n} leaves an empty side")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Classifier examples: the observation at the first step of each log,
/// labelled with the log's overall mode.
pub fn mode_examples(logs: &[ScenarioLog], idx: &[usize]) -> Vec<(EnvObservation, ModeLabel)> {
    idx.iter().map(|&i| (logs[i].observations[0].clone(), logs[i].mode())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub base: ScenarioParams,
    pub variations: Variations,
    pub horizon: usize,
    pub dt: f64,
    pub holdout: f64,
    pub split_seed: u64,
    pub alphas: Vec<f64>,
    pub penalty: f64,
    pub tolerance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            base: ScenarioParams {
                seed: 2024,
                ..ScenarioParams::default()
            },
            variations: default_variations(),
            horizon: crate::synth::DEFAULT_HORIZON,
            dt: crate::synth::DEFAULT_DT,
            holdout: 0.25,
            split_seed: 7,
            alphas: default_alpha_grid(),
            penalty: 1.0,
            tolerance: 1e-3,
        }
    }
}

/// 400 scenarios: 4 ego speeds x 5 lead gaps x 2 lead-speed profiles x
/// 2 adjacent-traffic layouts x 5 replicates (drivers cycle with the seed).
pub fn default_variations() -> Variations {
    Variations {
        ego_speed: Some(vec![15.0, 16.5, 18.0, 19.5]),
        lead_gap: Some(vec![15.0, 25.0, 40.0, 60.0, 90.0]),
        lead_speed_final: Some(vec![12.0, 18.0]),
        adjacent_offsets: Some(vec![vec![-30.0, 30.0], vec![-8.0, 25.0]]),
        driver: Some(vec![DriverProfile::typical()]),
        replicates: Some(5),
        ..Variations::default()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub scenarios: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub hyperplane: Hyperplane,
    /// Held-out accuracy of the mode classifier.
    pub classifier_accuracy: f64,
    /// Held-out accuracy of always predicting the training majority mode.
    pub majority_baseline: f64,
    pub predicted: Vec<ModeLabel>,
    pub sweeps: BTreeMap<ModeLabel, SweepResult>,
    /// Every validation sample against the tube of its predicted mode.
    pub overall: MetricsReport,
    /// The same, restricted to samples predicted as each mode.
    pub per_mode: Vec<MetricsReport>,
}

pub fn run_pipeline(cfg: &PipelineConfig, solve: &SolveConfig) -> Result<PipelineOutcome, PipelineError> {
    let params = generate_grid(&cfg.base, &cfg.variations)?;
    let logs = simulate_all(&params, cfg.horizon, cfg.dt)?;
    run_pipeline_on(&logs, cfg, solve)
}

/// The pipeline on already simulated logs.
pub fn run_pipeline_on(logs: &[ScenarioLog], cfg: &PipelineConfig, solve: &SolveConfig) -> Result<PipelineOutcome, PipelineError> {
    let (train, validation) = split_holdout(logs.len(), cfg.holdout, cfg.split_seed)?;
    let hyperplane = train_max_margin(&mode_examples(logs, &train), cfg.penalty, cfg.tolerance)?;

    let truth: Vec<ModeLabel> = validation.iter().map(|&i| logs[i].mode()).collect();
    let predicted = validation
        .iter()
        .map(|&i| classify(&hyperplane, &logs[i].observations[0]))
        .collect::<Result<Vec<_>, _>>()?;
    let hits = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let classifier_accuracy = hits as f64 / validation.len() as f64;
    let majority = {
        let changing = train.iter().filter(|&&i| logs[i].mode() == ModeLabel::LaneChanging).count();
        if 2 * changing > train.len() {
            ModeLabel::LaneChanging
        } else {
            ModeLabel::LaneKeeping
        }
    };
    let majority_baseline = truth.iter().filter(|&&t| t == majority).count() as f64 / truth.len() as f64;

    let positions = position_dataset(logs)?;
    let mut sweeps = BTreeMap::new();
    for mode in ModeLabel::ALL {
        let idx: Vec<usize> = train.iter().copied().filter(|&i| logs[i].mode() == mode).collect();
        if idx.is_empty() {
            log::warn!("no training trajectories for {mode}");
            continue;
        }
        sweeps.insert(mode, sweep(&positions.subset(&idx), &cfg.alphas, solve, true)?);
    }

    let held_out = positions.subset(&validation);
    let speeds: Vec<f64> = validation.iter().map(|&i| logs[i].initial_speed()).collect();
    let overall = tradeoff_curve("all", &held_out, &sweeps, &predicted, &speeds)?;
    let mut per_mode = Vec::new();
    for mode in ModeLabel::ALL {
        let idx: Vec<usize> = (0..validation.len()).filter(|&j| predicted[j] == mode).collect();
        if idx.is_empty() {
            continue;
        }
        let theta = vec![mode; idx.len()];
        let v: Vec<f64> = idx.iter().map(|&j| speeds[j]).collect();
        per_mode.push(tradeoff_curve(mode.as_str(), &held_out.subset(&idx), &sweeps, &theta, &v)?);
    }

    Ok(PipelineOutcome {
        scenarios: logs.len(),
        train,
        validation,
        hyperplane,
        classifier_accuracy,
        majority_baseline,
        predicted,
        sweeps,
        overall,
        per_mode,
    })
}

/// Required retained count at each α of a sweep over `n` trajectories.
pub fn retained_counts(alphas: &[f64], n: usize) -> Vec<usize> {
    alphas.iter().map(|&a| required_count(a, n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let (a, b) = split_holdout(40, 0.25, 3).unwrap();
        assert_eq!((a.len(), b.len()), (30, 10));
        assert_eq!(split_holdout(40, 0.25, 3).unwrap(), (a.clone(), b.clone()));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..40).collect::<Vec<_>>());
        assert_ne!(split_holdout(40, 0.25, 4).unwrap().1, b);
        assert!(split_holdout(3, 0.1, 0).is_err());
    }

    #[test]
    fn default_grid_has_400_scenarios() {
        let p = generate_grid(&PipelineConfig::default().base, &default_variations()).unwrap();
        assert_eq!(p.len(), 400);
    }

    #[test]
    fn sigma_check_brackets_the_samples() {
        let spec = DistributionSpec::standard_normal(200, 1);
        let s = sigma_check(&spec, 0.6827, &SolveConfig::default()).unwrap();
        assert!(s.ers.0 < 0.0 && s.ers.1 > 0.0);
        assert!((s.area - (s.ers.1 - s.ers.0)).abs() < 1e-12);
        assert!((s.quantile.1 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn table_marks_unfinished_runs() {
        let logs = lane_keeping_logs(12, 5, 1).unwrap();
        let d = position_dataset(&logs).unwrap();
        let cfg = SolveConfig::default();
        let done = bench_cell(&d, 10, 1, &cfg, Duration::from_secs(10)).unwrap();
        assert_eq!(done.agree, Some(true));
        let skipped = bench_cell(&d, 10, 2, &cfg, Duration::ZERO).unwrap();
        assert_eq!(skipped.agree, None);
        let csv = bench_table_csv(&[done, skipped]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,method,k=1,k=2");
        assert!(lines[2].starts_with("10,leave_k_out,") && lines[2].ends_with(",---"));
    }
}
