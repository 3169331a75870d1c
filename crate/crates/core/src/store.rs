//! Trajectory datasets: CSV loading, validation, centering, channel
//! projection and mode partitioning.
//!
//! A dataset holds `N` trajectories of `T + 1` samples each. Every sample is
//! a state vector whose layout is described by a [`ChannelSchema`].

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum distance of any initial position from the dataset origin after
/// centering, in channel units.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("input has no trajectory rows")]
    EmptyFile,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("trajectory `{id}` has {found} samples, expected {expected}")]
    RaggedHorizon {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("trajectory `{id}`: time index {t} is missing or duplicated")]
    BadTimeIndex { id: String, t: usize },
    #[error("non-finite value in trajectory `{id}` at t={t}, channel `{channel}`")]
    NonFinite {
        id: String,
        t: usize,
        channel: String,
    },
    #[error("line {line}: cannot parse `{value}`")]
    Parse { line: u64, value: String },
    #[error("trajectory `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("channel index {index} out of range for {dim} channels")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("channel {0} selected twice")]
    DuplicateChannel(usize),
    #[error("no channels selected")]
    NoChannels,
    #[error("{labels} labels given for {trajectories} trajectories")]
    LabelCountMismatch { labels: usize, trajectories: usize },
    #[error("no mode label for trajectory `{0}`")]
    MissingLabel(String),
    #[error("channel schema is invalid: {0}")]
    InvalidSchema(String),
}

/// Ordered channel layout of the state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSchema {
    pub names: Vec<String>,
    pub units: Vec<String>,
    /// Channels translated by [`center_dataset`]. Defaults to the first two.
    pub position: Vec<usize>,
    /// Heading channel in radians, used by [`rotate_to_heading`].
    pub heading: Option<usize>,
    /// Seconds per time step.
    pub dt: f64,
}

impl ChannelSchema {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Self {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let position = (0..names.len().min(2)).collect();
        ChannelSchema {
            units: vec![String::new(); names.len()],
            names,
            position,
            heading: None,
            dt: 1.0,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_units<S: AsRef<str>>(mut self, units: &[S]) -> Self {
        self.units = units.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn with_position(mut self, position: &[usize]) -> Self {
        self.position = position.to_vec();
        self
    }

    pub fn with_heading(mut self, heading: Option<usize>) -> Self {
        self.heading = heading;
        self
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    fn validate(&self) -> Result<(), StoreError> {
        let n = self.names.len();
        if n == 0 {
            return Err(StoreError::InvalidSchema("no channels".into()));
        }
        if self.units.len() != n {
            return Err(StoreError::InvalidSchema("units/names length differ".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StoreError::InvalidSchema(format!("dt = {}", self.dt)));
        }
        for &p in self.position.iter().chain(self.heading.iter()) {
            if p >= n {
                return Err(StoreError::IndexOutOfRange { index: p, dim: n });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    /// `T + 1` state vectors.
    pub samples: Vec<Vec<f64>>,
    pub mode_label: Option<String>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, samples: Vec<Vec<f64>>) -> Self {
        Trajectory {
            id: id.into(),
            samples,
            mode_label: None,
        }
    }

    pub fn with_mode(mut self, mode: impl Into<String>) -> Self {
        self.mode_label = Some(mode.into());
        self
    }
}

/// `N` time-aligned trajectories over a common horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    trajectories: Vec<Trajectory>,
    horizon: usize,
    schema: ChannelSchema,
    origin: Vec<f64>,
}

impl TrajectoryDataset {
    /// Validates shape and finiteness. The origin is taken from the first
    /// trajectory's initial state.
    pub fn new(trajectories: Vec<Trajectory>, schema: ChannelSchema) -> Result<Self, StoreError> {
        schema.validate()?;
        let first = trajectories.first().ok_or(StoreError::EmptyFile)?;
        let steps = first.samples.len();
        if steps == 0 {
            return Err(StoreError::RaggedHorizon {
                id: first.id.clone(),
                expected: 1,
                found: 0,
            });
        }
        let dim = schema.dim();
        for traj in &trajectories {
            if traj.samples.len() != steps {
                return Err(StoreError::RaggedHorizon {
                    id: traj.id.clone(),
                    expected: steps,
                    found: traj.samples.len(),
                });
            }
            for (t, s) in traj.samples.iter().enumerate() {
                if s.len() != dim {
                    return Err(StoreError::DimensionMismatch {
                        id: traj.id.clone(),
                        expected: dim,
                        found: s.len(),
                    });
                }
                if let Some(c) = s.iter().position(|v| !v.is_finite()) {
                    return Err(StoreError::NonFinite {
                        id: traj.id.clone(),
                        t,
                        channel: schema.names[c].clone(),
                    });
                }
            }
        }
        let origin = first.samples[0].clone();
        Ok(TrajectoryDataset {
            trajectories,
            horizon: steps - 1,
            schema,
            origin,
        })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Number of time steps `T`; each trajectory has `T + 1` samples.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.schema.dt
    }

    pub fn schema(&self) -> &ChannelSchema {
        &self.schema
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn dim(&self) -> usize {
        self.schema.dim()
    }

    pub fn ids(&self) -> Vec<String> {
        self.trajectories.iter().map(|t| t.id.clone()).collect()
    }

    /// True when every initial position lies within [`ALIGNMENT_TOLERANCE`]
    /// of the origin on the position channels.
    pub fn is_aligned(&self) -> bool {
        self.trajectories.iter().all(|traj| {
            let d2: f64 = self
                .schema
                .position
                .iter()
                .map(|&c| (traj.samples[0][c] - self.origin[c]).powi(2))
                .sum();
            d2.sqrt() <= ALIGNMENT_TOLERANCE
        })
    }

    /// Keeps the trajectories at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self, StoreError> {
        let trajs = indices
            .iter()
            .map(|&i| {
                self.trajectories
                    .get(i)
                    .cloned()
                    .ok_or(StoreError::IndexOutOfRange {
                        index: i,
                        dim: self.len(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = TrajectoryDataset::new(trajs, self.schema.clone())?;
        out.origin = self.origin.clone();
        Ok(out)
    }
}

fn parse_f64(raw: &str, line: u64) -> Result<f64, StoreError> {
    raw.trim().parse::<f64>().map_err(|_| StoreError::Parse {
        line,
        value: raw.to_string(),
    })
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, StoreError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| StoreError::MissingColumn(name.to_string()))
}

/// Reads the trajectory CSV (`id,t,<channel...>`) from any reader.
pub fn read_dataset<R: Read>(reader: R, schema: &ChannelSchema) -> Result<TrajectoryDataset, StoreError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, "id")?;
    let t_col = column(&headers, "t")?;
    let chan_cols = schema
        .names
        .iter()
        .map(|n| column(&headers, n))
        .collect::<Result<Vec<_>, _>>()?;

    // id -> (t -> sample), ids kept in order of first appearance
    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, BTreeMap<usize, Vec<f64>>> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(id_col).unwrap_or("").to_string();
        let t_raw = rec.get(t_col).unwrap_or("");
        let t: usize = t_raw.parse().map_err(|_| StoreError::Parse {
            line,
            value: t_raw.to_string(),
        })?;
        let sample = chan_cols
            .iter()
            .map(|&c| parse_f64(rec.get(c).unwrap_or(""), line))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(c) = sample.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite {
                id,
                t,
                channel: schema.names[c].clone(),
            });
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            BTreeMap::new()
        });
        if entry.insert(t, sample).is_some() {
            return Err(StoreError::BadTimeIndex { id, t });
        }
    }
    if order.is_empty() {
        return Err(StoreError::EmptyFile);
    }

    let expected = rows[&order[0]].len();
    let mut trajectories = Vec::with_capacity(order.len());
    for id in order {
        let steps = rows.remove(&id).unwrap_or_default();
        if steps.len() != expected {
            return Err(StoreError::RaggedHorizon {
                id,
                expected,
                found: steps.len(),
            });
        }
        let mut samples = Vec::with_capacity(steps.len());
        for (k, (t, s)) in steps.into_iter().enumerate() {
            if t != k {
                return Err(StoreError::BadTimeIndex { id, t: k });
            }
            samples.push(s);
        }
        trajectories.push(Trajectory::new(id, samples));
    }
    TrajectoryDataset::new(trajectories, schema.clone())
}

pub fn load_dataset(path: impl AsRef<Path>, schema: &ChannelSchema) -> Result<TrajectoryDataset, StoreError> {
    let file = std::fs::File::open(path)?;
    read_dataset(std::io::BufReader::new(file), schema)
}

/// Writes the trajectory CSV. Values use the shortest representation that
/// parses back to the same `f64`.
pub fn write_dataset<W: Write>(writer: W, d: &TrajectoryDataset) -> Result<(), StoreError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "t".to_string()];
    header.extend(d.schema.names.iter().cloned());
    wtr.write_record(&header)?;
    for traj in &d.trajectories {
        for (t, s) in traj.samples.iter().enumerate() {
            let mut rec = vec![traj.id.clone(), t.to_string()];
            rec.extend(s.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(path: impl AsRef<Path>, d: &TrajectoryDataset) -> Result<(), StoreError> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), d)
}

/// Reads a mode-label CSV (`id,mode`).
pub fn read_mode_labels<R: Read>(reader: R) -> Result<Vec<(String, String)>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = column(&headers, "id")?;
    let mode_col = column(&headers, "mode")?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((
            rec.get(id_col).unwrap_or("").to_string(),
            rec.get(mode_col).unwrap_or("").to_string(),
        ));
    }
    Ok(out)
}

pub fn load_mode_labels(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, StoreError> {
    read_mode_labels(std::io::BufReader::new(std::fs::File::open(path)?))
}

/// Orders `(id, mode)` pairs to match the dataset's trajectory order.
pub fn labels_for(d: &TrajectoryDataset, labels: &[(String, String)]) -> Result<Vec<String>, StoreError> {
    let map: HashMap<&str, &str> = labels.iter().map(|(i, m)| (i.as_str(), m.as_str())).collect();
    d.trajectories
        .iter()
        .map(|t| {
            map.get(t.id.as_str())
                .map(|m| m.to_string())
                .ok_or_else(|| StoreError::MissingLabel(t.id.clone()))
        })
        .collect()
}

/// Translates every trajectory so its initial position is zero on the
/// position channels. Other channels are untouched.
pub fn center_dataset(d: &TrajectoryDataset) -> TrajectoryDataset {
    let mut out = d.clone();
    for traj in &mut out.trajectories {
        let start: Vec<f64> = d.schema.position.iter().map(|&c| traj.samples[0][c]).collect();
        for s in &mut traj.samples {
            for (k, &c) in d.schema.position.iter().enumerate() {
                s[c] -= start[k];
            }
        }
    }
    for &c in &d.schema.position {
        out.origin[c] = 0.0;
    }
    out
}

/// Rotates each trajectory about its initial position so that its initial
/// heading points along +x. Uses the first two position channels and the
/// schema's heading channel (radians); the heading channel is shifted by the
/// same angle.
pub fn rotate_to_heading(d: &TrajectoryDataset) -> Result<TrajectoryDataset, StoreError> {
    let heading = d
        .schema
        .heading
        .ok_or_else(|| StoreError::InvalidSchema("no heading channel declared".into()))?;
    if d.schema.position.len() < 2 {
        return Err(StoreError::InvalidSchema("need two position channels to rotate".into()));
    }
    let (px, py) = (d.schema.position[0], d.schema.position[1]);
    let mut out = d.clone();
    for traj in &mut out.trajectories {
        let h0 = traj.samples[0][heading];
        let (sin, cos) = (-h0).sin_cos();
        let (x0, y0) = (traj.samples[0][px], traj.samples[0][py]);
        for s in &mut traj.samples {
            let (dx, dy) = (s[px] - x0, s[py] - y0);
            s[px] = x0 + cos * dx - sin * dy;
            s[py] = y0 + sin * dx + cos * dy;
            s[heading] -= h0;
        }
    }
    Ok(out)
}

/// Selected channels of every trajectory as one dense array.
///
/// Values are laid out trajectory-major, then time, then channel:
/// `values[(i * steps + t) * n_c + c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDataset {
    ids: Vec<String>,
    names: Vec<String>,
    channels: Vec<usize>,
    steps: usize,
    dt: f64,
    values: Vec<f64>,
}

impl ChannelDataset {
    /// Builds a dataset from raw values laid out as described on the type.
    /// Channel indices default to `0..n_c`.
    pub fn from_values(
        ids: Vec<String>,
        names: Vec<String>,
        steps: usize,
        dt: f64,
        values: Vec<f64>,
    ) -> Result<Self, StoreError> {
        let n_c = names.len();
        if n_c == 0 {
            return Err(StoreError::NoChannels);
        }
        if ids.is_empty() {
            return Err(StoreError::EmptyFile);
        }
        if steps == 0 || values.len() != ids.len() * steps * n_c {
            return Err(StoreError::InvalidSchema(format!(
                "{} values for {} trajectories x {} steps x {} channels",
                values.len(),
                ids.len(),
                steps,
                n_c
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(StoreError::InvalidSchema(format!("dt = {dt}")));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let per = steps * n_c;
            return Err(StoreError::NonFinite {
                id: ids[k / per].clone(),
                t: (k % per) / n_c,
                channel: names[k % n_c].clone(),
            });
        }
        Ok(ChannelDataset {
            ids,
            channels: (0..n_c).collect(),
            names,
            steps,
            dt,
            values,
        })
    }

    /// Convenience constructor for a single channel: `rows[i][t]`.
    pub fn from_rows(rows: &[Vec<f64>], dt: f64) -> Result<Self, StoreError> {
        let steps = rows.first().map(|r| r.len()).unwrap_or(0);
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        let mut values = Vec::with_capacity(rows.len() * steps);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != steps {
                return Err(StoreError::RaggedHorizon {
                    id: i.to_string(),
                    expected: steps,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_values(ids, vec!["x".into()], steps, dt, values)
    }

    /// Number of trajectories `N`.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Samples per trajectory, `T + 1`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> usize {
        self.steps - 1
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    /// Values per trajectory, `(T + 1) * n_c`.
    pub fn row_len(&self) -> usize {
        self.steps * self.names.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Indices of the selected channels in the parent schema.
    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// All values of trajectory `i`, time-major.
    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.row_len();
        &self.values[i * len..(i + 1) * len]
    }

    pub fn value(&self, i: usize, t: usize, c: usize) -> f64 {
        self.values[(i * self.steps + t) * self.names.len() + c]
    }

    /// Keeps the trajectories at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> ChannelDataset {
        let mut values = Vec::with_capacity(indices.len() * self.row_len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        ChannelDataset {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            names: self.names.clone(),
            channels: self.channels.clone(),
            steps: self.steps,
            dt: self.dt,
            values,
        }
    }
}

/// Projects the dataset onto `channels`, in the given order.
pub fn project_channels(d: &TrajectoryDataset, channels: &[usize]) -> Result<ChannelDataset, StoreError> {
    if channels.is_empty() {
        return Err(StoreError::NoChannels);
    }
    let dim = d.dim();
    for (k, &c) in channels.iter().enumerate() {
        if c >= dim {
            return Err(StoreError::IndexOutOfRange { index: c, dim });
        }
        if channels[..k].contains(&c) {
            return Err(StoreError::DuplicateChannel(c));
        }
    }
    let steps = d.horizon + 1;
    let mut values = Vec::with_capacity(d.len() * steps * channels.len());
    for traj in &d.trajectories {
        for s in &traj.samples {
            values.extend(channels.iter().map(|&c| s[c]));
        }
    }
    Ok(ChannelDataset {
        ids: d.ids(),
        names: channels.iter().map(|&c| d.schema.names[c].clone()).collect(),
        channels: channels.to_vec(),
        steps,
        dt: d.dt(),
        values,
    })
}

/// Splits the dataset by per-trajectory mode label. Partitions are disjoint,
/// cover the dataset, and keep the original relative order.
pub fn partition_by_mode<K: Ord + Clone>(
    d: &TrajectoryDataset,
    labels: &[K],
) -> Result<BTreeMap<K, TrajectoryDataset>, StoreError> {
    if labels.len() != d.len() {
        return Err(StoreError::LabelCountMismatch {
            labels: labels.len(),
            trajectories: d.len(),
        });
    }
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, k) in labels.iter().enumerate() {
        groups.entry(k.clone()).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(k, idx)| d.subset(&idx).map(|sub| (k, sub)))
        .collect()
}
