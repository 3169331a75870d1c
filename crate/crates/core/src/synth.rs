//! Synthetic lane-keeping / lane-changing logs on a two-lane one-way road.
//!
//! Each log is a deterministic nominal plan (car following plus an optional
//! lane change) with seeded perturbations on top: Ornstein-Uhlenbeck lateral
//! wander and speed noise, and occasionally an injected outlier excursion.
//! The lane-change decision uses only the nominal state, so the mode of a
//! scenario does not depend on the noise draw.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{label_transitions, trajectory_mode, EnvObservation, ModeLabel, FEATURE_NAMES};
use crate::dist::{open_unit, standard_normal};
use crate::store::{ChannelSchema, StoreError, Trajectory, TrajectoryDataset};

pub const LANE_WIDTH: f64 = 3.7;
/// Reported gap when no vehicle is present, metres.
pub const GAP_CAP: f64 = 150.0;
pub const DEFAULT_HORIZON: usize = 50;
pub const DEFAULT_DT: f64 = 0.1;
/// Duration of the lateral lane-change manoeuvre, seconds.
pub const MANEUVER_S: f64 = 3.0;
/// Time over which the lead vehicle moves from its initial to final speed.
pub const LEAD_RAMP_S: f64 = 2.0;
/// Correlation time of the lateral wander, seconds.
pub const LATERAL_TAU_S: f64 = 2.5;
/// Correlation time of the speed noise, seconds.
pub const SPEED_TAU_S: f64 = 1.5;
/// Allowed slack in the per-step displacement check.
pub const KINEMATIC_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("option list for {0} is empty")]
    EmptyOptionList(&'static str),
    #[error("logs disagree on horizon or time step")]
    HeterogeneousLogs,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("feature file: {0}")]
    Features(String),
}

/// Behavioural knobs standing in for an individual driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverProfile {
    pub name: String,
    /// Time gap to the lead vehicle below which the driver wants to pass.
    pub headway_s: f64,
    /// Minimum clearance to every adjacent-lane vehicle before changing.
    pub min_room_m: f64,
    /// Range of the delay between blinker onset and lateral motion.
    pub blinker_lead_s: (f64, f64),
}

impl DriverProfile {
    pub fn cautious() -> Self {
        DriverProfile {
            name: "cautious".into(),
            headway_s: 2.0,
            min_room_m: 20.0,
            blinker_lead_s: (1.5, 2.0),
        }
    }

    pub fn typical() -> Self {
        DriverProfile {
            name: "typical".into(),
            headway_s: 1.6,
            min_room_m: 15.0,
            blinker_lead_s: (1.0, 2.0),
        }
    }

    pub fn assertive() -> Self {
        DriverProfile {
            name: "assertive".into(),
            headway_s: 1.2,
            min_room_m: 10.0,
            blinker_lead_s: (1.0, 1.5),
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cautious" => Some(Self::cautious()),
            "typical" => Some(Self::typical()),
            "assertive" => Some(Self::assertive()),
            _ => None,
        }
    }
}

impl Default for DriverProfile {
    fn default() -> Self {
        Self::typical()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    /// Trajectory id; derived from the seed when absent.
    pub name: Option<String>,
    pub ego_speed: f64,
    /// 0 is the right lane, 1 the left lane.
    pub ego_lane: usize,
    /// Surrounding vehicles: the first is the lead in the ego lane, the
    /// rest drive in the adjacent lane.
    pub vehicle_count: usize,
    pub lead_gap: f64,
    pub lead_speed_initial: f64,
    pub lead_speed_final: f64,
    /// Initial longitudinal offsets of adjacent-lane vehicles from the ego.
    pub adjacent_offsets: Vec<f64>,
    pub adjacent_speed: f64,
    pub speed_band: (f64, f64),
    pub outlier_rate: f64,
    /// Stationary standard deviation of the lateral wander, metres.
    pub lateral_noise: f64,
    /// Stationary standard deviation of the speed noise, m/s.
    pub speed_noise: f64,
    pub driver: DriverProfile,
    pub seed: u64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            name: None,
            ego_speed: 17.5,
            ego_lane: 0,
            vehicle_count: 1,
            lead_gap: 40.0,
            lead_speed_initial: 14.0,
            lead_speed_final: 14.0,
            adjacent_offsets: vec![-30.0, 30.0],
            adjacent_speed: 17.5,
            speed_band: (15.0, 20.0),
            outlier_rate: 0.05,
            lateral_noise: 0.08,
            speed_noise: 0.1,
            driver: DriverProfile::typical(),
            seed: 0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        let (lo, hi) = self.speed_band;
        if !(lo > 0.0 && hi >= lo) {
            return bad(format!("speed band {lo}..{hi}"));
        }
        if !(self.ego_speed >= lo && self.ego_speed <= hi) {
            return bad(format!("ego speed {} outside {lo}..{hi}", self.ego_speed));
        }
        if self.ego_lane > 1 {
            return bad(format!("ego lane {}", self.ego_lane));
        }
        if self.vehicle_count > 3 {
            return bad(format!("vehicle count {} exceeds 3", self.vehicle_count));
        }
        if self.adjacent_offsets.len() + 1 < self.vehicle_count {
            return bad("too few adjacent offsets for the vehicle count".into());
        }
        let finite = [
            self.lead_gap,
            self.lead_speed_initial,
            self.lead_speed_final,
            self.adjacent_speed,
            self.lateral_noise,
            self.speed_noise,
        ];
        if finite.iter().chain(&self.adjacent_offsets).any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.lead_gap <= 0.0 || self.lead_speed_initial < 0.0 || self.lead_speed_final < 0.0 || self.adjacent_speed < 0.0
        {
            return bad("gaps and speeds must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_rate) {
            return bad(format!("outlier rate {}", self.outlier_rate));
        }
        if self.lateral_noise < 0.0 || self.speed_noise < 0.0 {
            return bad("noise scales must be non-negative".into());
        }
        let d = &self.driver;
        let (l0, l1) = d.blinker_lead_s;
        if !(d.headway_s > 0.0 && d.min_room_m >= 0.0 && l0 > 0.0 && l1 >= l0) {
            return bad(format!("driver profile {}", d.name));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("scn-{:016x}", self.seed))
    }
}

/// Option lists for [`generate_grid`]. An absent list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Variations {
    pub ego_speed: Option<Vec<f64>>,
    pub ego_lane: Option<Vec<usize>>,
    pub vehicle_count: Option<Vec<usize>>,
    pub lead_gap: Option<Vec<f64>>,
    pub lead_speed_initial: Option<Vec<f64>>,
    pub lead_speed_final: Option<Vec<f64>>,
    pub adjacent_offsets: Option<Vec<Vec<f64>>>,
    pub outlier_rate: Option<Vec<f64>>,
    pub driver: Option<Vec<DriverProfile>>,
    /// Copies of every combination, each with its own seed.
    pub replicates: Option<usize>,
}

fn options<T: Clone>(opt: &Option<Vec<T>>, base: &T, name: &'static str) -> Result<Vec<T>, SynthError> {
    match opt {
        None => Ok(vec![base.clone()]),
        Some(v) if v.is_empty() => Err(SynthError::EmptyOptionList(name)),
        Some(v) => Ok(v.clone()),
    }
}

/// Cartesian product of the option lists, in field order with replicates
/// innermost. Scenario `j` gets seed `base.seed ^ (j * φ)` (φ the 64-bit
/// golden ratio), so the first scenario keeps the base seed and all seeds
/// are distinct, and name `s{j:04}`.
pub fn generate_grid(base: &ScenarioParams, v: &Variations) -> Result<Vec<ScenarioParams>, SynthError> {
    let speeds = options(&v.ego_speed, &base.ego_speed, "ego_speed")?;
    let lanes = options(&v.ego_lane, &base.ego_lane, "ego_lane")?;
    let counts = options(&v.vehicle_count, &base.vehicle_count, "vehicle_count")?;
    let gaps = options(&v.lead_gap, &base.lead_gap, "lead_gap")?;
    let lead0 = options(&v.lead_speed_initial, &base.lead_speed_initial, "lead_speed_initial")?;
    let lead1 = options(&v.lead_speed_final, &base.lead_speed_final, "lead_speed_final")?;
    let offsets = options(&v.adjacent_offsets, &base.adjacent_offsets, "adjacent_offsets")?;
    let rates = options(&v.outlier_rate, &base.outlier_rate, "outlier_rate")?;
    let drivers = options(&v.driver, &base.driver, "driver")?;
    let reps = match v.replicates {
        Some(0) => return Err(SynthError::EmptyOptionList("replicates")),
        Some(r) => r,
        None => 1,
    };
    let mut out = Vec::new();
    for s in &speeds {
        for l in &lanes {
            for c in &counts {
                for g in &gaps {
                    for a in &lead0 {
                        for b in &lead1 {
                            for o in &offsets {
                                for r in &rates {
                                    for d in &drivers {
                                        for _ in 0..reps {
                                            let j = out.len() as u64;
                                            let p = ScenarioParams {
                                                name: Some(format!("s{j:04}")),
                                                ego_speed: *s,
                                                ego_lane: *l,
                                                vehicle_count: *c,
                                                lead_gap: *g,
                                                lead_speed_initial: *a,
                                                lead_speed_final: *b,
                                                adjacent_offsets: o.clone(),
                                                outlier_rate: *r,
                                                driver: d.clone(),
                                                seed: base.seed ^ j.wrapping_mul(0x9E37_79B9_7F4A_7C15),
                                                ..base.clone()
                                            };
                                            p.validate()?;
                                            out.push(p);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    if out.len() == 1 && v.replicates.is_none() {
        out[0].name = base.name.clone();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutlierKind {
    Swerve,
    Braking,
}

/// Ego state per step: position, speed magnitude and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLog {
    pub id: String,
    pub dt: f64,
    pub ego: Vec<EgoState>,
    pub observations: Vec<EnvObservation>,
    pub blinker: Vec<bool>,
    pub modes: Vec<ModeLabel>,
    pub outlier: Option<OutlierKind>,
    /// Step at which the blinker came on.
    pub blinker_onset: Option<usize>,
    /// Step at which lateral motion started.
    pub maneuver_start: Option<usize>,
    /// Summed distance from the noise-free reference path, metre-steps.
    pub deviation: f64,
}

impl ScenarioLog {
    pub fn horizon(&self) -> usize {
        self.ego.len() - 1
    }

    pub fn is_outlier(&self) -> bool {
        self.outlier.is_some()
    }

    pub fn mode(&self) -> ModeLabel {
        trajectory_mode(&self.modes)
    }

    pub fn initial_speed(&self) -> f64 {
        self.ego[0].speed
    }

    /// Every step moves at most `speed * dt` (up to the tolerance).
    pub fn is_kinematically_consistent(&self) -> bool {
        self.ego.windows(2).all(|w| {
            let d = ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
            d <= w[0].speed * self.dt * (1.0 + KINEMATIC_TOLERANCE) + 1e-12
        })
    }
}

struct Vehicle {
    x: f64,
    lane: usize,
    speed_initial: f64,
    speed_final: f64,
}

impl Vehicle {
    fn speed(&self, t: f64) -> f64 {
        let f = (t / LEAD_RAMP_S).min(1.0);
        self.speed_initial + f * (self.speed_final - self.speed_initial)
    }
}

fn lane_center(lane: usize) -> f64 {
    lane as f64 * LANE_WIDTH
}

fn lane_of(y: f64) -> usize {
    if y >= LANE_WIDTH / 2.0 {
        1
    } else {
        0
    }
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Intelligent-driver-model acceleration.
fn idm(u: f64, v_des: f64, leader: Option<(f64, f64)>) -> f64 {
    const A_MAX: f64 = 1.5;
    const B_COMF: f64 = 2.0;
    const S0: f64 = 2.0;
    const T_H: f64 = 1.2;
    let free = 1.0 - (u / v_des.max(0.1)).powi(4);
    match leader {
        Some((gap, v_lead)) => {
            let dv = u - v_lead;
            let s_star = S0 + (u * T_H + u * dv / (2.0 * (A_MAX * B_COMF).sqrt())).max(0.0);
            A_MAX * (free - (s_star / gap.max(0.5)).powi(2))
        }
        None => A_MAX * free,
    }
}

struct Nominal {
    x: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
    onset: Option<usize>,
    start: Option<usize>,
    end: Option<usize>,
}

/// Noise-free plan: IDM car following, and a lane change once the time gap
/// to the lead drops below the driver's headway while the adjacent lane has
/// room. Lateral motion begins `lead_frac` of the way through the driver's
/// blinker-lead range after the blinker comes on.
fn plan(p: &ScenarioParams, vehicles: &[Vehicle], steps: usize, dt: f64, lead_frac: f64) -> Nominal {
    let (l0, l1) = p.driver.blinker_lead_s;
    let lead_steps = ((l0 + lead_frac * (l1 - l0)) / dt).round() as usize;
    let man_steps = (MANEUVER_S / dt).round() as usize;
    let target = 1 - p.ego_lane;
    let dir = if target > p.ego_lane { 1.0 } else { -1.0 };
    let v_des = p.ego_speed;

    let mut n = Nominal {
        x: Vec::with_capacity(steps + 1),
        y: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps + 1),
        onset: None,
        start: None,
        end: None,
    };
    let (mut x, mut u) = (0.0, p.ego_speed);
    let mut vx: Vec<f64> = vehicles.iter().map(|v| v.x).collect();
    for t in 0..=steps {
        let time = t as f64 * dt;
        let y = match n.start {
            Some(s) if t >= s => lane_center(p.ego_lane) + dir * LANE_WIDTH * smoothstep((t - s) as f64 / man_steps as f64),
            _ => lane_center(p.ego_lane),
        };
        n.x.push(x);
        n.y.push(y);
        n.u.push(u);

        let lane = lane_of(y);
        if n.onset.is_none() && lane == p.ego_lane {
            let lead_gap = vehicles
                .iter()
                .zip(&vx)
                .filter(|(v, &px)| v.lane == p.ego_lane && px > x)
                .map(|(_, &px)| px - x)
                .fold(f64::INFINITY, f64::min);
            let room = vehicles
                .iter()
                .zip(&vx)
                .filter(|(v, _)| v.lane == target)
                .all(|(_, &px)| (px - x).abs() >= p.driver.min_room_m);
            if lead_gap.is_finite() && lead_gap / u.max(0.1) < p.driver.headway_s && room {
                n.onset = Some(t);
                n.start = Some(t + lead_steps);
                n.end = Some(t + lead_steps + man_steps);
            }
        }
        let leader = vehicles
            .iter()
            .zip(&vx)
            .filter(|(v, &px)| v.lane == lane && px > x)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(v, &px)| (px - x, v.speed(time)));
        let a = idm(u, v_des, leader);
        for (v, px) in vehicles.iter().zip(vx.iter_mut()) {
            *px += v.speed(time) * dt;
        }
        x += u * dt;
        u = (u + a * dt).max(0.0);
    }
    n
}

fn ou_path(rng: &mut ChaCha8Rng, steps: usize, sigma: f64, tau: f64, dt: f64) -> Vec<f64> {
    let rho = (-dt / tau).exp();
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut v = 0.0;
    (0..=steps)
        .map(|t| {
            if t > 0 {
                v = rho * v + innov * standard_normal(rng);
            }
            v
        })
        .collect()
}

/// Simulates one scenario over `horizon + 1` steps of `dt` seconds.
pub fn simulate(p: &ScenarioParams, horizon: usize, dt: f64) -> Result<ScenarioLog, SynthError> {
    p.validate()?;
    if horizon == 0 || !(dt.is_finite() && dt > 0.0) {
        return Err(SynthError::InvalidParams(format!("horizon {horizon}, dt {dt}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    // fixed draw order keeps streams aligned across parameter changes
    let lead_frac = open_unit(&mut rng);
    let outlier_draw = open_unit(&mut rng);
    let kind_draw = open_unit(&mut rng);
    let o_start = 0.5 + 1.5 * open_unit(&mut rng);
    let o_len = 2.0 + open_unit(&mut rng);
    let o_size = open_unit(&mut rng);
    let o_sign = if open_unit(&mut rng) < 0.5 { -1.0 } else { 1.0 };
    let lateral = ou_path(&mut rng, horizon, p.lateral_noise, LATERAL_TAU_S, dt);
    let speed = ou_path(&mut rng, horizon, p.speed_noise, SPEED_TAU_S, dt);

    let target = 1 - p.ego_lane;
    let mut vehicles = Vec::new();
    if p.vehicle_count >= 1 {
        vehicles.push(Vehicle {
            x: p.lead_gap,
            lane: p.ego_lane,
            speed_initial: p.lead_speed_initial,
            speed_final: p.lead_speed_final,
        });
    }
    for &off in p.adjacent_offsets.iter().take(p.vehicle_count.saturating_sub(1)) {
        vehicles.push(Vehicle {
            x: off,
            lane: target,
            speed_initial: p.adjacent_speed,
            speed_final: p.adjacent_speed,
        });
    }
    let nom = plan(p, &vehicles, horizon, dt, lead_frac);

    let outlier = (outlier_draw < p.outlier_rate).then(|| {
        if kind_draw < 0.5 {
            OutlierKind::Swerve
        } else {
            OutlierKind::Braking
        }
    });
    let mut dy = vec![0.0; horizon + 1];
    let mut du = vec![0.0; horizon + 1];
    match outlier {
        Some(OutlierKind::Swerve) => {
            let amp = o_sign * (1.5 + o_size);
            for (t, v) in dy.iter_mut().enumerate() {
                let s = (t as f64 * dt - o_start) / o_len;
                if (0.0..=1.0).contains(&s) {
                    *v = amp * (std::f64::consts::PI * s).sin();
                }
            }
        }
        Some(OutlierKind::Braking) => {
            let decel = 4.0 + 2.0 * o_size;
            let (brake_s, recover) = (1.5, 1.5);
            for (t, v) in du.iter_mut().enumerate() {
                let s = t as f64 * dt - o_start;
                *v = if s <= 0.0 {
                    0.0
                } else if s <= brake_s {
                    -decel * s
                } else {
                    (-decel * brake_s + recover * (s - brake_s)).min(0.0)
                };
            }
        }
        None => {}
    }

    let steps = horizon + 1;
    let y: Vec<f64> = (0..steps).map(|t| nom.y[t] + lateral[t] + dy[t]).collect();
    let u: Vec<f64> = (0..steps).map(|t| (nom.u[t] + speed[t] + du[t]).max(0.0)).collect();
    let mut ego = Vec::with_capacity(steps);
    let mut x = 0.0;
    for t in 0..steps {
        // lateral rate towards the next sample; the final step repeats the last rate
        let w = if t + 1 < steps { (y[t + 1] - y[t]) / dt } else { (y[t] - y[t - 1]) / dt };
        ego.push(EgoState {
            x,
            y: y[t],
            speed: u[t].hypot(w),
            heading: w.atan2(u[t]),
        });
        x += u[t] * dt;
    }
    let deviation = (0..steps)
        .map(|t| (ego[t].x - nom.x[t]).hypot(ego[t].y - nom.y[t]))
        .sum();

    let mut blinker = vec![false; steps];
    if let (Some(on), Some(off)) = (nom.onset, nom.end) {
        for b in blinker.iter_mut().take(off.min(steps)).skip(on) {
            *b = true;
        }
    }
    let modes = label_transitions(&blinker, horizon).expect("blinker length matches horizon");

    let mut vx: Vec<f64> = vehicles.iter().map(|v| v.x).collect();
    let mut observations = Vec::with_capacity(steps);
    for (t, e) in ego.iter().enumerate() {
        let time = t as f64 * dt;
        let lane = lane_of(e.y);
        let lead = vehicles
            .iter()
            .zip(&vx)
            .filter(|(v, &px)| v.lane == lane && px > e.x)
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(v, &px)| (px - e.x, v.speed(time)));
        let (lead_gap, rel_speed) = match lead {
            Some((g, v)) => (g.min(GAP_CAP), v - u[t]),
            None => (GAP_CAP, 0.0),
        };
        let adjacent_gap = vehicles
            .iter()
            .zip(&vx)
            .filter(|(v, _)| v.lane != lane)
            .map(|(_, &px)| (px - e.x).abs())
            .fold(GAP_CAP, f64::min);
        observations.push(EnvObservation::new(
            t,
            vec![lead_gap, rel_speed, e.speed, e.y - lane_center(lane), adjacent_gap],
        ));
        for (v, px) in vehicles.iter().zip(vx.iter_mut()) {
            *px += v.speed(time) * dt;
        }
    }

    Ok(ScenarioLog {
        id: p.id(),
        dt,
        ego,
        observations,
        blinker,
        modes,
        outlier,
        blinker_onset: nom.onset,
        maneuver_start: nom.start.filter(|&s| s <= horizon),
        deviation,
    })
}

/// Simulates every scenario; results keep the input order.
pub fn simulate_all(params: &[ScenarioParams], horizon: usize, dt: f64) -> Result<Vec<ScenarioLog>, SynthError> {
    use rayon::prelude::*;
    params.par_iter().map(|p| simulate(p, horizon, dt)).collect()
}

/// Generator self-check: every flagged outlier deviates from its reference
/// path by strictly more than the 95th percentile of the unflagged logs.
pub fn outliers_separated(logs: &[ScenarioLog]) -> bool {
    let mut clean: Vec<f64> = logs.iter().filter(|l| !l.is_outlier()).map(|l| l.deviation).collect();
    if clean.is_empty() {
        return true;
    }
    clean.sort_by(f64::total_cmp);
    let rank = ((0.95 * clean.len() as f64).ceil() as usize).clamp(1, clean.len());
    let p95 = clean[rank - 1];
    logs.iter().filter(|l| l.is_outlier()).all(|l| l.deviation > p95)
}

pub fn trajectory_schema(dt: f64) -> ChannelSchema {
    ChannelSchema::new(&["x", "y", "speed", "heading"])
        .with_units(&["m", "m", "m/s", "rad"])
        .with_position(&[0, 1])
        .with_heading(Some(3))
        .with_dt(dt)
}

fn check_homogeneous(logs: &[ScenarioLog]) -> Result<(), SynthError> {
    if let Some(first) = logs.first() {
        if logs.iter().any(|l| l.ego.len() != first.ego.len() || l.dt != first.dt) {
            return Err(SynthError::HeterogeneousLogs);
        }
    }
    Ok(())
}

/// Trajectory dataset of the ego states, in log order.
pub fn logs_to_dataset(logs: &[ScenarioLog]) -> Result<TrajectoryDataset, SynthError> {
    check_homogeneous(logs)?;
    let dt = logs.first().map_or(DEFAULT_DT, |l| l.dt);
    let trajs = logs
        .iter()
        .map(|l| {
            let samples = l.ego.iter().map(|e| vec![e.x, e.y, e.speed, e.heading]).collect();
            Trajectory::new(l.id.clone(), samples).with_mode(l.mode().as_str())
        })
        .collect();
    Ok(TrajectoryDataset::new(trajs, trajectory_schema(dt))?)
}

/// One row of the labelled-features file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub observation: EnvObservation,
    pub blinker: bool,
    pub label: ModeLabel,
}

/// Writes the trajectory CSV, the `id,mode` label CSV and the
/// `id,t,<features>,blinker,label` feature CSV. An empty log list yields
/// header-only files.
pub fn export_dataset<W1: Write, W2: Write, W3: Write>(
    logs: &[ScenarioLog],
    trajectories: W1,
    labels: W2,
    features: W3,
) -> Result<(), SynthError> {
    check_homogeneous(logs)?;
    if logs.is_empty() {
        let mut w = csv::Writer::from_writer(trajectories);
        w.write_record(["id", "t", "x", "y", "speed", "heading"])?;
        w.flush()?;
    } else {
        crate::store::write_dataset(trajectories, &logs_to_dataset(logs)?)?;
    }

    let mut w = csv::Writer::from_writer(labels);
    w.write_record(["id", "mode"])?;
    for l in logs {
        w.write_record([l.id.as_str(), l.mode().as_str()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_writer(features);
    let mut header = vec!["id", "t"];
    header.extend(FEATURE_NAMES);
    header.extend(["blinker", "label"]);
    w.write_record(&header)?;
    for l in logs {
        for (t, o) in l.observations.iter().enumerate() {
            let mut rec = vec![l.id.clone(), t.to_string()];
            rec.extend(o.features.iter().map(|v| v.to_string()));
            rec.push(u8::from(l.blinker[t]).to_string());
            rec.push(l.modes[t].to_string());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a labelled-features file written by [`export_dataset`].
pub fn read_features<R: Read>(reader: R) -> Result<Vec<FeatureRow>, SynthError> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < 5 || &headers[0] != "id" || &headers[1] != "t" || &headers[n - 2] != "blinker" || &headers[n - 1] != "label" {
        return Err(SynthError::Features("expected header id,t,<features...>,blinker,label".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| SynthError::Features(format!("bad number {s:?}")));
        let t = rec[1]
            .trim()
            .parse::<usize>()
            .map_err(|_| SynthError::Features(format!("bad step {:?}", &rec[1])))?;
        let features = (2..n - 2).map(|j| parse(&rec[j])).collect::<Result<Vec<_>, _>>()?;
        if features.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::Features("non-finite feature".into()));
        }
        let blinker = match rec[n - 2].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => return Err(SynthError::Features(format!("bad blinker {other:?}"))),
        };
        let label = rec[n - 1]
            .trim()
            .parse::<ModeLabel>()
            .map_err(|e| SynthError::Features(e.to_string()))?;
        rows.push(FeatureRow {
            id: rec[0].to_string(),
            observation: EnvObservation::new(t, features),
            blinker,
            label,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> ScenarioParams {
        ScenarioParams {
            outlier_rate: 0.0,
            ..ScenarioParams::default()
        }
    }

    #[test]
    fn grid_product() {
        let v = Variations {
            ego_speed: Some(vec![15.0, 18.0]),
            vehicle_count: Some(vec![1, 2, 3]),
            ..Variations::default()
        };
        let g = generate_grid(&quiet(), &v).unwrap();
        assert_eq!(g.len(), 6);
        let mut seeds: Vec<u64> = g.iter().map(|p| p.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 6);
    }

    #[test]
    fn grid_identity_and_empty() {
        let base = quiet();
        let v = Variations {
            ego_speed: Some(vec![base.ego_speed]),
            ..Variations::default()
        };
        assert_eq!(generate_grid(&base, &v).unwrap(), vec![base.clone()]);
        let v = Variations {
            lead_gap: Some(vec![]),
            ..Variations::default()
        };
        assert!(matches!(generate_grid(&base, &v), Err(SynthError::EmptyOptionList("lead_gap"))));
    }

    #[test]
    fn no_vehicles_means_lane_keeping() {
        let p = ScenarioParams {
            vehicle_count: 0,
            ..quiet()
        };
        let log = simulate(&p, DEFAULT_HORIZON, DEFAULT_DT).unwrap();
        assert!(log.blinker.iter().all(|b| !b));
        assert_eq!(log.mode(), ModeLabel::LaneKeeping);
        assert!(log.is_kinematically_consistent());
    }

    #[test]
    fn deterministic() {
        let p = ScenarioParams { seed: 11, ..ScenarioParams::default() };
        assert_eq!(simulate(&p, 50, 0.1).unwrap(), simulate(&p, 50, 0.1).unwrap());
    }

    #[test]
    fn closing_lead_triggers_change() {
        let p = ScenarioParams {
            lead_gap: 25.0,
            lead_speed_initial: 10.0,
            lead_speed_final: 10.0,
            ..quiet()
        };
        let log = simulate(&p, 50, 0.1).unwrap();
        assert_eq!(log.mode(), ModeLabel::LaneChanging);
        let onset = log.blinker_onset.unwrap();
        let start = log.maneuver_start.unwrap();
        let lead = (start - onset) as f64 * 0.1;
        assert!((1.0..=2.0 + 1e-9).contains(&lead));
        assert_eq!(label_transitions(&log.blinker, 50).unwrap(), log.modes);
        assert!(log.ego.last().unwrap().y > 1.0);
    }

    #[test]
    fn blocked_adjacent_lane_prevents_change() {
        let p = ScenarioParams {
            lead_gap: 25.0,
            lead_speed_initial: 10.0,
            lead_speed_final: 10.0,
            vehicle_count: 3,
            adjacent_offsets: vec![-3.0, 4.0],
            adjacent_speed: 17.5,
            ..quiet()
        };
        // the adjacent vehicles keep pace for the first two seconds
        let log = simulate(&p, 20, 0.1).unwrap();
        assert_eq!(log.mode(), ModeLabel::LaneKeeping);
    }

    #[test]
    fn all_outliers_flagged() {
        for seed in 0..20 {
            let p = ScenarioParams {
                outlier_rate: 1.0,
                seed,
                ..ScenarioParams::default()
            };
            assert!(simulate(&p, 50, 0.1).unwrap().is_outlier());
        }
    }

    #[test]
    fn invalid_params() {
        for p in [
            ScenarioParams { ego_speed: 25.0, ..quiet() },
            ScenarioParams { vehicle_count: 4, ..quiet() },
            ScenarioParams { outlier_rate: 1.5, ..quiet() },
        ] {
            assert!(matches!(simulate(&p, 50, 0.1), Err(SynthError::InvalidParams(_))));
        }
    }

    #[test]
    fn export_round_trip() {
        let logs: Vec<ScenarioLog> = (0..10)
            .map(|s| simulate(&ScenarioParams { seed: s, name: Some(format!("a{s}")), ..quiet() }, 20, 0.1).unwrap())
            .collect();
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        export_dataset(&logs, &mut a, &mut b, &mut c).unwrap();
        let d = crate::store::read_dataset(&a[..], &trajectory_schema(0.1)).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(crate::store::read_mode_labels(&b[..]).unwrap().len(), 10);
        let rows = read_features(&c[..]).unwrap();
        assert_eq!(rows.len(), 10 * 21);
        assert_eq!(rows[0].observation.features.len(), FEATURE_NAMES.len());
    }

    #[test]
    fn export_empty_and_mixed() {
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        export_dataset(&[], &mut a, &mut b, &mut c).unwrap();
        assert_eq!(String::from_utf8(b).unwrap(), "id,mode\n");
        assert!(String::from_utf8(a).unwrap().starts_with("id,t,"));
        let logs = vec![
            simulate(&quiet(), 20, 0.1).unwrap(),
            simulate(&quiet(), 30, 0.1).unwrap(),
        ];
        assert!(matches!(
            export_dataset(&logs, Vec::new(), Vec::new(), Vec::new()),
            Err(SynthError::HeterogeneousLogs)
        ));
    }
}
