use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ers_core::classifier::{classify, train_max_margin, trajectory_mode, EnvObservation, Hyperplane, ModeLabel};
use ers_core::dist::{area_reduction_curve, detect_typical_set, sample_dataset, DistributionKind, DistributionSpec};
use ers_core::metrics::MetricsReport;
use ers_core::pipeline::{
    bench_cell, bench_table_csv, distribution_trials, lane_keeping_logs, position_dataset, run_pipeline_on, sigma_check,
    split_holdout, PipelineConfig,
};
use ers_core::solver::{
    default_alpha_grid, descending_grid, solve_exact, solve_milp_textbook, solve_naive_limited, sweep, ErsInstance,
    ErsSolution, SolveConfig, SweepResult,
};
use ers_core::store::{
    center_dataset, labels_for, load_dataset, load_mode_labels, project_channels, rotate_to_heading, ChannelDataset,
    ChannelSchema,
};
use ers_core::synth::{export_dataset, generate_grid, read_features, simulate_all, ScenarioParams, Variations};
use ers_core::tube::Tube;

use crate::args::*;
use crate::config;
use crate::error::{InputError, LimitReached};
use crate::output::{csv_text, Output};

pub const WORKERS_ENV: &str = "ERS_WORKERS";

fn input_err(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

struct Ctx {
    solve: SolveConfig,
    out: Output,
    timing: bool,
}

/// `flag_workers` is the value given on the command line, before config
/// merging: flag > ERS_WORKERS > config > all cores.
fn context(common: &Common, flag_workers: Option<usize>) -> Result<Ctx> {
    let env_workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .map_err(|_| input_err(format!("{WORKERS_ENV}={v:?} is not a count")))?,
        ),
        Err(_) => None,
    };
    let workers = flag_workers
        .or(env_workers)
        .or(common.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        bail!(input_err("workers must be positive"));
    }
    let mut solve = SolveConfig::default().with_workers(workers);
    if let Some(t) = common.time_limit {
        if !(t.is_finite() && t > 0.0) {
            bail!(input_err(format!("time limit {t} must be positive")));
        }
        solve = solve.with_time_limit(Duration::from_secs_f64(t));
    }
    if let Some(n) = common.node_limit {
        if n == 0 {
            bail!(input_err("node limit must be positive"));
        }
        solve = solve.with_node_limit(n);
    }
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("ers-out"));
    Ok(Ctx {
        solve,
        out: Output::new(&dir, common.format.unwrap_or_default())?,
        timing: common.timing,
    })
}

fn resolve<T: Serialize + serde::de::DeserializeOwned>(args: &T, common: &Common, name: &str) -> Result<T> {
    let cfg = match &common.config {
        Some(p) => Some(config::load(p)?),
        None => None,
    };
    config::merge(args, cfg.as_ref(), name)
}

pub fn run(cmd: Command) -> Result<Vec<PathBuf>> {
    let name = cmd.name();
    match cmd {
        Command::Fit(a) => cmd_fit(resolve(&a, &a.common, name)?, a.common.workers),
        Command::Bench(a) => cmd_bench(resolve(&a, &a.common, name)?, a.common.workers),
        Command::Distcheck(a) => cmd_distcheck(resolve(&a, &a.common, name)?, a.common.workers),
        Command::Sweep(a) => cmd_sweep(resolve(&a, &a.common, name)?, a.common.workers),
        Command::Simulate(a) => cmd_simulate(resolve(&a, &a.common, name)?, a.common.workers),
        Command::Classify(a) => cmd_classify(resolve(&a, &a.common, name)?, a.common.workers),
        Command::Metrics(a) => cmd_metrics(resolve(&a, &a.common, name)?, a.common.workers),
    }
}

fn alpha_grid(g: &GridOpts, default: Vec<f64>) -> Result<Vec<f64>> {
    let grid = match (&g.alphas, g.start, g.stop, g.step) {
        (Some(a), ..) => a.clone(),
        (None, None, None, None) => default,
        (None, start, stop, step) => {
            let (start, stop, step) = (start.unwrap_or(1.0), stop.unwrap_or(0.5), step.unwrap_or(0.05));
            if !(step > 0.0 && start >= stop) {
                bail!(input_err(format!("grid {start}..{stop} by {step} is not descending")));
            }
            descending_grid(start, stop, step)
        }
    };
    check_alphas(&grid)?;
    Ok(grid)
}

fn check_alphas(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&a| !(a > 0.0 && a <= 1.0)) || grid.windows(2).any(|w| w[0] <= w[1]) {
        bail!(input_err(format!("α grid {grid:?} must be strictly decreasing within (0, 1]")));
    }
    Ok(())
}

fn dist_spec(d: &DistOpts) -> Result<DistributionSpec> {
    let p = d.params.clone().unwrap_or_else(|| vec![0.0, 1.0]);
    if p.len() != 2 {
        bail!(input_err(format!("--params takes two values, got {}", p.len())));
    }
    let kind = match d.kind.unwrap_or(DistKind::Normal) {
        DistKind::Uniform => DistributionKind::Uniform { low: p[0], high: p[1] },
        DistKind::Normal => DistributionKind::Normal {
            mean: p[0],
            std_dev: p[1],
        },
        DistKind::Lognormal => DistributionKind::Lognormal { mu: p[0], sigma: p[1] },
        DistKind::ExtremeValue => DistributionKind::ExtremeValue {
            location: p[0],
            scale: p[1],
        },
    };
    let spec = DistributionSpec::new(kind, d.n.unwrap_or(1000), d.seed.unwrap_or(0));
    spec.validate()?;
    Ok(spec)
}

fn header_columns(path: &Path) -> Result<Vec<String>> {
    let file = std::fs::File::open(path).map_err(|e| input_err(format!("cannot open {}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let h = r
        .headers()
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?
        .clone();
    Ok(h.iter()
        .filter(|c| *c != "id" && *c != "t")
        .map(str::to_string)
        .collect())
}

struct Loaded {
    data: ChannelDataset,
    ids: Vec<String>,
}

/// Loads a trajectory CSV, optionally keeps one mode, centers and rotates,
/// and projects to the bounded channels.
fn load_channels(
    path: &Path,
    channels: Option<&[String]>,
    heading: Option<&str>,
    dt: f64,
    center: bool,
    rotate: bool,
    mode_filter: Option<(&Path, &str)>,
) -> Result<Loaded> {
    let names = header_columns(path)?;
    let pick: Vec<String> = match channels {
        Some(c) => c.to_vec(),
        None if names.iter().any(|n| n == "x") && names.iter().any(|n| n == "y") => vec!["x".into(), "y".into()],
        None => names.clone(),
    };
    let index_of = |c: &str| {
        names
            .iter()
            .position(|n| n == c)
            .ok_or_else(|| input_err(format!("{} has no column `{c}`", path.display())))
    };
    let position = pick.iter().map(|c| index_of(c)).collect::<Result<Vec<_>>>()?;
    let heading = heading.map(index_of).transpose()?;
    let schema = ChannelSchema::new(&names)
        .with_position(&position)
        .with_heading(heading)
        .with_dt(dt);
    let mut d = load_dataset(path, &schema).with_context(|| format!("loading {}", path.display()))?;
    if let Some((labels, mode)) = mode_filter {
        let labels = load_mode_labels(labels).with_context(|| format!("loading {}", labels.display()))?;
        let per = labels_for(&d, &labels)?;
        let keep: Vec<usize> = (0..d.len()).filter(|&i| per[i] == mode).collect();
        if keep.is_empty() {
            bail!(input_err(format!("no trajectories labelled `{mode}`")));
        }
        d = d.subset(&keep)?;
    }
    if center {
        d = center_dataset(&d);
    }
    if rotate {
        d = rotate_to_heading(&d)?;
    }
    let ids = d.ids();
    Ok(Loaded {
        data: project_channels(&d, &position)?,
        ids,
    })
}

fn tube_rows(tube: &Tube, prefix: &[String]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for t in 0..tube.steps() {
        for (c, name) in tube.channels.iter().enumerate() {
            let mut r = prefix.to_vec();
            r.extend([
                t.to_string(),
                name.clone(),
                tube.lower[c][t].to_string(),
                tube.upper[c][t].to_string(),
            ]);
            rows.push(r);
        }
    }
    rows
}

fn alpha_tag(alpha: f64) -> String {
    format!("a{alpha}")
}

#[derive(Serialize)]
struct SolutionFile<'a> {
    alpha: f64,
    n: usize,
    m: usize,
    area: f64,
    proven_optimal: bool,
    selected: Vec<&'a str>,
    rejected: Vec<&'a str>,
    tube: &'a Tube,
    nodes_explored: Option<u64>,
    wall_time_s: Option<f64>,
}

fn cmd_fit(a: FitArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let input = a.input.as_deref().ok_or_else(|| input_err("fit needs --input"))?;
    let alphas = a.alpha.clone().unwrap_or_else(|| vec![1.0]);
    if alphas.is_empty() || alphas.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        bail!(input_err(format!("α values {alphas:?} must lie in (0, 1]")));
    }
    let filter = match (&a.labels, &a.mode) {
        (Some(l), Some(m)) => Some((l.as_path(), m.as_str())),
        (None, None) => None,
        _ => bail!(input_err("--labels and --mode go together")),
    };
    if a.rotate && a.heading.is_none() {
        bail!(input_err("--rotate needs --heading"));
    }
    let loaded = load_channels(
        input,
        a.channels.as_deref(),
        a.heading.as_deref(),
        a.dt.unwrap_or(1.0),
        !a.no_center,
        a.rotate,
        filter,
    )?;
    let data = &loaded.data;

    let mut summary = Vec::new();
    let mut selection_cols: Vec<Vec<bool>> = Vec::new();
    let mut timing_rows = Vec::new();
    let mut unproven = Vec::new();
    for &alpha in &alphas {
        let mut inst = ErsInstance::new(data.clone(), alpha)?;
        if let Some(w) = &a.weights {
            inst = inst.with_weights(w.clone())?;
        }
        let sol: ErsSolution = match a.solver.unwrap_or(SolverKind::Exact) {
            SolverKind::Exact => solve_exact(&inst, &ctx.solve)?,
            SolverKind::Milp => solve_milp_textbook(&inst, &ctx.solve)?,
            SolverKind::Naive => solve_naive_limited(&inst, ctx.solve.time_limit)?,
        };
        if !sol.proven_optimal {
            unproven.push(alpha);
        }
        let tag = alpha_tag(alpha);
        let file = SolutionFile {
            alpha,
            n: data.len(),
            m: sol.m,
            area: sol.area,
            proven_optimal: sol.proven_optimal,
            selected: sol.selected().iter().map(|&i| loaded.ids[i].as_str()).collect(),
            rejected: sol.rejected().iter().map(|&i| loaded.ids[i].as_str()).collect(),
            tube: &sol.tube,
            nodes_explored: ctx.timing.then_some(sol.nodes_explored),
            wall_time_s: ctx.timing.then_some(sol.wall_time_s),
        };
        ctx.out.json(&format!("solution_{tag}"), &file)?;
        ctx.out
            .table(&format!("tube_{tag}"), &csv_text(&["t", "channel", "lower", "upper"], tube_rows(&sol.tube, &[]))?)?;
        summary.push(vec![
            alpha.to_string(),
            data.len().to_string(),
            sol.m.to_string(),
            sol.area.to_string(),
            sol.proven_optimal.to_string(),
        ]);
        timing_rows.push(vec![
            alpha.to_string(),
            sol.wall_time_s.to_string(),
            sol.nodes_explored.to_string(),
        ]);
        selection_cols.push(sol.selection.clone());
    }
    ctx.out
        .table("fit_summary", &csv_text(&["alpha", "n", "m", "area", "proven_optimal"], summary)?)?;
    let mut header = vec!["id".to_string()];
    header.extend(alphas.iter().map(|&x| format!("selected_{}", alpha_tag(x))));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..data.len()).map(|i| {
        let mut r = vec![loaded.ids[i].clone()];
        r.extend(selection_cols.iter().map(|c| u8::from(c[i]).to_string()));
        r
    });
    ctx.out.table("selection", &csv_text(&header_refs, rows)?)?;
    if ctx.timing {
        ctx.out
            .table("fit_timing", &csv_text(&["alpha", "wall_time_s", "nodes_explored"], timing_rows)?)?;
    }
    finish(ctx.out, &unproven)
}

fn finish(out: Output, unproven: &[f64]) -> Result<Vec<PathBuf>> {
    if !unproven.is_empty() {
        return Err(LimitReached(format!(
            "solver limit reached without proof of optimality at α = {unproven:?}; outputs hold the best selections found"
        ))
        .into());
    }
    Ok(out.written().to_vec())
}

fn cmd_bench(a: BenchArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let ns = a.ns.clone().unwrap_or_else(|| vec![100, 500]);
    let ks = a.ks.clone().unwrap_or_else(|| vec![1, 2, 3, 4, 5, 10]);
    let limit = a.naive_limit.unwrap_or(600.0);
    if !(limit.is_finite() && limit >= 0.0) {
        bail!(input_err(format!("naive limit {limit} must be non-negative")));
    }
    let max_n = ns.iter().copied().max().ok_or_else(|| input_err("--ns is empty"))?;
    if ks.is_empty() || ns.iter().any(|&n| ks.iter().any(|&k| k >= n)) {
        bail!(input_err("every k must be smaller than every N"));
    }
    let logs = lane_keeping_logs(max_n, a.horizon.unwrap_or(50), a.seed.unwrap_or(0))?;
    let data = position_dataset(&logs)?;
    let mut cells = Vec::new();
    for &n in &ns {
        for &k in &ks {
            let c = bench_cell(&data, n, k, &ctx.solve, Duration::from_secs_f64(limit))?;
            log::info!("N = {n}, k = {k}: exact {:?} s, naive {:?} s", c.exact_s, c.naive_s);
            if c.agree == Some(false) {
                log::warn!("N = {n}, k = {k}: exact and enumeration areas differ");
            }
            cells.push(c);
        }
    }
    let opt = |v: Option<f64>| v.map_or_else(|| "---".to_string(), |x| x.to_string());
    let areas = cells
        .iter()
        .map(|c| vec![c.n.to_string(), c.k.to_string(), opt(c.exact_area), c.exact_proven.to_string()]);
    ctx.out
        .table("bench_areas", &csv_text(&["n", "k", "exact_area", "exact_proven"], areas)?)?;
    ctx.out.table("table1_timing", &bench_table_csv(&cells))?;
    let detail = cells.iter().map(|c| {
        vec![
            c.n.to_string(),
            c.k.to_string(),
            opt(c.exact_s),
            opt(c.naive_s),
            opt(c.naive_area),
            c.agree.map_or_else(|| "---".to_string(), |b| b.to_string()),
        ]
    });
    ctx.out.table(
        "bench_timing_cells",
        &csv_text(&["n", "k", "exact_s", "naive_s", "naive_area", "agree"], detail)?,
    )?;
    let unproven: Vec<f64> = cells
        .iter()
        .filter(|c| !c.exact_proven)
        .map(|c| (c.n - c.k) as f64 / c.n as f64)
        .collect();
    finish(ctx.out, &unproven)
}

#[derive(Serialize)]
struct SigmaTrial {
    seed: u64,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct SigmaEntry {
    alpha: f64,
    quantile_lower: f64,
    quantile_upper: f64,
    mean_lower: f64,
    mean_upper: f64,
    mean_endpoint_error: f64,
    trials: Vec<SigmaTrial>,
}

fn cmd_distcheck(a: DistcheckArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let mut spec = dist_spec(&a.dist)?;
    let trials = a.trials.unwrap_or(1);
    if trials == 0 {
        bail!(input_err("--trials must be positive"));
    }
    let grid = alpha_grid(&a.grid, descending_grid(1.0, 0.5, 0.01))?;
    if grid[0] != 1.0 {
        bail!(input_err("the area-reduction grid must start at α = 1"));
    }
    let sigma_alphas = a.sigma_alphas.clone().unwrap_or_else(|| vec![0.6827, 0.9545]);
    if sigma_alphas.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        bail!(input_err("interval α values must lie in (0, 1)"));
    }
    let slope_fraction = a.slope_fraction.unwrap_or(0.2);

    let horizon = a.dist.horizon.unwrap_or(0);
    let mut sweeps: Vec<SweepResult> = Vec::with_capacity(trials);
    if horizon == 0 {
        sweeps = distribution_trials(&spec, trials, &grid, a.accelerated, &ctx.solve)?.1;
    } else {
        for t in 0..trials {
            let s = DistributionSpec {
                seed: spec.seed.wrapping_add(t as u64),
                ..spec.clone()
            };
            sweeps.push(sweep(&sample_dataset(&s, horizon)?, &grid, &ctx.solve, a.accelerated)?);
        }
    }
    let curve = area_reduction_curve(&sweeps)?;
    ctx.out.table("area_reduction", &curve.to_csv())?;
    let areas = sweeps.iter().enumerate().flat_map(|(t, s)| {
        s.alphas
            .iter()
            .zip(s.areas())
            .map(move |(al, ar)| vec![t.to_string(), al.to_string(), ar.to_string()])
    });
    ctx.out.table("sweep_areas", &csv_text(&["trial", "alpha", "area"], areas)?)?;
    let typical = detect_typical_set(&curve, slope_fraction)?;
    ctx.out.json(
        "typical_set",
        &json!({"slope_fraction": slope_fraction, "rejection_ratio": typical}),
    )?;

    let base_seed = spec.seed;
    let mut entries = Vec::new();
    for &alpha in &sigma_alphas {
        let mut rows = Vec::new();
        let mut quantile = (0.0, 0.0);
        for t in 0..trials {
            spec.seed = base_seed.wrapping_add(t as u64);
            let s = sigma_check(&spec, alpha, &ctx.solve)?;
            quantile = s.quantile;
            rows.push(SigmaTrial {
                seed: spec.seed,
                lower: s.ers.0,
                upper: s.ers.1,
            });
        }
        let k = rows.len() as f64;
        let mean_lower = rows.iter().map(|r| r.lower).sum::<f64>() / k;
        let mean_upper = rows.iter().map(|r| r.upper).sum::<f64>() / k;
        let err = rows
            .iter()
            .map(|r| ((r.lower - quantile.0).abs() + (r.upper - quantile.1).abs()) / 2.0)
            .sum::<f64>()
            / k;
        entries.push(SigmaEntry {
            alpha,
            quantile_lower: quantile.0,
            quantile_upper: quantile.1,
            mean_lower,
            mean_upper,
            mean_endpoint_error: err,
            trials: rows,
        });
    }
    spec.seed = base_seed;
    ctx.out.json("sigma_check", &entries)?;

    // first-trial point samples with their membership in each interval
    let samples = sample_dataset(&spec, 0)?;
    let mut header = vec!["index".to_string(), "value".to_string()];
    header.extend(sigma_alphas.iter().map(|&x| format!("in_{}", alpha_tag(x))));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..samples.len()).map(|i| {
        let v = samples.row(i)[0];
        let mut r = vec![i.to_string(), v.to_string()];
        r.extend(entries.iter().map(|e| {
            let t = &e.trials[0];
            u8::from(v >= t.lower && v <= t.upper).to_string()
        }));
        r
    });
    ctx.out.table("samples", &csv_text(&header_refs, rows)?)?;
    let unproven: Vec<f64> = sweeps
        .iter()
        .flat_map(|s| s.solutions.iter().filter(|x| !x.proven_optimal).map(|x| x.alpha))
        .collect();
    finish(ctx.out, &unproven)
}

fn cmd_sweep(a: SweepArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let grid = alpha_grid(&a.grid, default_alpha_grid())?;
    let data = match &a.input {
        Some(p) => load_channels(p, a.channels.as_deref(), None, a.dt.unwrap_or(1.0), true, false, None)?.data,
        None => sample_dataset(&dist_spec(&a.dist)?, a.dist.horizon.unwrap_or(0))?,
    };
    let mut runs: Vec<(&str, SweepResult)> = Vec::new();
    if a.baseline || !a.accelerated {
        runs.push(("independent", sweep(&data, &grid, &ctx.solve, false)?));
    }
    if a.accelerated {
        runs.push(("accelerated", sweep(&data, &grid, &ctx.solve, true)?));
    }
    let rows = runs.iter().flat_map(|(name, s)| {
        s.solutions.iter().zip(&s.pool_sizes).map(move |(sol, pool)| {
            vec![
                name.to_string(),
                sol.alpha.to_string(),
                sol.m.to_string(),
                pool.to_string(),
                sol.area.to_string(),
                sol.proven_optimal.to_string(),
            ]
        })
    });
    ctx.out.table(
        "sweep",
        &csv_text(&["strategy", "alpha", "m", "pool_size", "area", "proven_optimal"], rows)?,
    )?;
    if let [(_, ind), (_, acc)] = runs.as_slice() {
        let rows = grid.iter().enumerate().map(|(j, al)| {
            let (e, f) = (ind.solutions[j].area, acc.solutions[j].area);
            let gap = if e > 0.0 { (f - e) / e } else { 0.0 };
            vec![al.to_string(), e.to_string(), f.to_string(), gap.to_string()]
        });
        ctx.out.table(
            "sweep_comparison",
            &csv_text(&["alpha", "independent_area", "accelerated_area", "relative_gap"], rows)?,
        )?;
        let rows = grid.iter().enumerate().map(|(j, al)| {
            vec![
                al.to_string(),
                ind.wall_times[j].to_string(),
                acc.wall_times[j].to_string(),
            ]
        });
        ctx.out.table(
            "sweep_timing",
            &csv_text(&["alpha", "independent_s", "accelerated_s"], rows)?,
        )?;
        let (ti, ta) = (ind.total_wall_time(), acc.total_wall_time());
        let ratio = if ti > 0.0 { ta / ti } else { 0.0 };
        ctx.out.table(
            "speedup_timing",
            &csv_text(
                &["independent_total_s", "accelerated_total_s", "time_ratio"],
                [vec![ti.to_string(), ta.to_string(), ratio.to_string()]],
            )?,
        )?;
    } else if ctx.timing {
        let rows = runs
            .iter()
            .flat_map(|(name, s)| s.alphas.iter().zip(&s.wall_times).map(move |(al, w)| vec![name.to_string(), al.to_string(), w.to_string()]));
        ctx.out
            .table("sweep_timing", &csv_text(&["strategy", "alpha", "wall_time_s"], rows)?)?;
    }
    let unproven: Vec<f64> = runs
        .iter()
        .flat_map(|(_, s)| s.solutions.iter().filter(|x| !x.proven_optimal).map(|x| x.alpha))
        .collect();
    finish(ctx.out, &unproven)
}

/// Scenario grid file: `{"base": {...}, "variations": {...}}`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridFile {
    base: Option<ScenarioParams>,
    variations: Option<Variations>,
}

fn scenario_config(s: &ScenarioOpts) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &s.grid {
        let text = std::fs::read_to_string(path).map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
        let g: GridFile = serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        if let Some(b) = g.base {
            cfg.base = b;
        }
        cfg.variations = g.variations.unwrap_or_default();
    }
    if let Some(seed) = s.seed {
        cfg.base.seed = seed;
    }
    if let Some(h) = s.horizon {
        cfg.horizon = h;
    }
    if let Some(dt) = s.dt {
        cfg.dt = dt;
    }
    if cfg.horizon == 0 || !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        bail!(input_err("horizon and dt must be positive"));
    }
    Ok(cfg)
}

fn cmd_simulate(a: SimulateArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let cfg = scenario_config(&a.scenario)?;
    let params = generate_grid(&cfg.base, &cfg.variations)?;
    let logs = simulate_all(&params, cfg.horizon, cfg.dt)?;
    let (mut traj, mut labels, mut feats) = (Vec::new(), Vec::new(), Vec::new());
    export_dataset(&logs, &mut traj, &mut labels, &mut feats)?;
    ctx.out.csv("trajectories", std::str::from_utf8(&traj)?)?;
    ctx.out.csv("labels", std::str::from_utf8(&labels)?)?;
    ctx.out.csv("features", std::str::from_utf8(&feats)?)?;
    let opt = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    let rows = params.iter().zip(&logs).map(|(p, l)| {
        vec![
            l.id.clone(),
            p.driver.name.clone(),
            p.ego_speed.to_string(),
            p.vehicle_count.to_string(),
            p.lead_gap.to_string(),
            p.lead_speed_final.to_string(),
            l.mode().to_string(),
            l.outlier.map_or_else(String::new, |o| format!("{o:?}").to_lowercase()),
            opt(l.blinker_onset),
            opt(l.maneuver_start),
            l.deviation.to_string(),
        ]
    });
    ctx.out.table(
        "scenarios",
        &csv_text(
            &[
                "id",
                "driver",
                "ego_speed",
                "vehicle_count",
                "lead_gap",
                "lead_speed_final",
                "mode",
                "outlier",
                "blinker_onset",
                "maneuver_start",
                "deviation",
            ],
            rows,
        )?,
    )?;
    let changing = logs.iter().filter(|l| l.mode() == ModeLabel::LaneChanging).count();
    ctx.out.json(
        "simulate_summary",
        &json!({
            "scenarios": logs.len(),
            "horizon": cfg.horizon,
            "dt": cfg.dt,
            "lane_changing": changing,
            "outliers": logs.iter().filter(|l| l.is_outlier()).count(),
            "outliers_separated": ers_core::synth::outliers_separated(&logs),
            "kinematically_consistent": logs.iter().all(|l| l.is_kinematically_consistent()),
        }),
    )?;
    Ok(ctx.out.written().to_vec())
}

struct TrajectoryExample {
    id: String,
    first: EnvObservation,
    mode: ModeLabel,
}

/// Groups feature rows by id (first-appearance order): the first step's
/// observation and the trajectory-level mode.
fn trajectory_examples(path: &Path) -> Result<Vec<TrajectoryExample>> {
    let file = std::fs::File::open(path).map_err(|e| input_err(format!("cannot open {}: {e}", path.display())))?;
    let rows = read_features(std::io::BufReader::new(file))?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for r in rows {
        if !by_id.contains_key(&r.id) {
            order.push(r.id.clone());
        }
        by_id.entry(r.id.clone()).or_default().push(r);
    }
    if order.is_empty() {
        bail!(input_err(format!("{} has no rows", path.display())));
    }
    order
        .into_iter()
        .map(|id| {
            let mut rows = by_id.remove(&id).unwrap_or_default();
            rows.sort_by_key(|r| r.observation.t);
            let labels: Vec<ModeLabel> = rows.iter().map(|r| r.label).collect();
            Ok(TrajectoryExample {
                first: rows[0].observation.clone(),
                mode: trajectory_mode(&labels),
                id,
            })
        })
        .collect()
}

fn cmd_classify(a: ClassifyArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let path = a.features.as_deref().ok_or_else(|| input_err("classify needs --features"))?;
    let ex = trajectory_examples(path)?;
    let (h, split): (Hyperplane, Vec<&str>) = match &a.model {
        Some(m) => {
            let text = std::fs::read_to_string(m).map_err(|e| input_err(format!("cannot read {}: {e}", m.display())))?;
            let h: Hyperplane = serde_json::from_str(&text).map_err(|e| input_err(format!("{}: {e}", m.display())))?;
            (h, vec!["applied"; ex.len()])
        }
        None => {
            let (train, _) = split_holdout(ex.len(), a.holdout.unwrap_or(0.25), a.split_seed.unwrap_or(7))?;
            let examples: Vec<(EnvObservation, ModeLabel)> = train.iter().map(|&i| (ex[i].first.clone(), ex[i].mode)).collect();
            let h = train_max_margin(&examples, a.penalty.unwrap_or(1.0), a.tolerance.unwrap_or(1e-3))?;
            let mut split = vec!["holdout"; ex.len()];
            for &i in &train {
                split[i] = "train";
            }
            ctx.out.json("hyperplane", &h)?;
            (h, split)
        }
    };
    let mut rows = Vec::new();
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (e, s) in ex.iter().zip(&split) {
        let score = h.score(&e.first.features)?;
        let pred = classify(&h, &e.first)?;
        let entry = stats.entry(s).or_default();
        entry.0 += 1;
        entry.1 += usize::from(pred == e.mode);
        rows.push(vec![
            e.id.clone(),
            e.mode.to_string(),
            pred.to_string(),
            score.to_string(),
            s.to_string(),
        ]);
    }
    ctx.out
        .table("predictions", &csv_text(&["id", "mode", "predicted", "score", "split"], rows)?)?;
    let majority = {
        let train: Vec<&TrajectoryExample> = ex.iter().zip(&split).filter(|(_, s)| **s != "holdout").map(|(e, _)| e).collect();
        let changing = train.iter().filter(|e| e.mode == ModeLabel::LaneChanging).count();
        if 2 * changing > train.len() {
            ModeLabel::LaneChanging
        } else {
            ModeLabel::LaneKeeping
        }
    };
    let eval: Vec<&TrajectoryExample> = ex
        .iter()
        .zip(&split)
        .filter(|(_, s)| **s != "train")
        .map(|(e, _)| e)
        .collect();
    let baseline = eval.iter().filter(|e| e.mode == majority).count() as f64 / eval.len().max(1) as f64;
    let acc: BTreeMap<&str, serde_json::Value> = stats
        .iter()
        .map(|(k, (n, hit))| (*k, json!({"examples": n, "accuracy": *hit as f64 / *n as f64})))
        .collect();
    ctx.out.json(
        "classifier",
        &json!({
            "splits": acc,
            "majority_mode": majority,
            "majority_baseline": baseline,
            "training": h.training,
        }),
    )?;
    Ok(ctx.out.written().to_vec())
}

fn cmd_metrics(a: MetricsArgs, flag_workers: Option<usize>) -> Result<Vec<PathBuf>> {
    let mut ctx = context(&a.common, flag_workers)?;
    let mut cfg = scenario_config(&a.scenario)?;
    cfg.alphas = alpha_grid(&a.grid, cfg.alphas.clone())?;
    if let Some(p) = a.penalty {
        cfg.penalty = p;
    }
    if let Some(t) = a.tolerance {
        cfg.tolerance = t;
    }
    if let Some(h) = a.holdout {
        cfg.holdout = h;
    }
    if let Some(s) = a.split_seed {
        cfg.split_seed = s;
    }
    let params = generate_grid(&cfg.base, &cfg.variations)?;
    let logs = simulate_all(&params, cfg.horizon, cfg.dt)?;
    let o = run_pipeline_on(&logs, &cfg, &ctx.solve)?;

    let mut table = String::from(MetricsReport::CSV_HEADER);
    table.push('\n');
    for r in o.per_mode.iter().chain([&o.overall]) {
        table.push_str(&r.csv_rows());
    }
    ctx.out.table("metrics", &table)?;
    ctx.out.table("tradeoff", &o.overall.tradeoff_csv())?;

    let mut reduction = Vec::new();
    let mut tubes = Vec::new();
    for (mode, s) in &o.sweeps {
        let curve = area_reduction_curve(std::slice::from_ref(s))?;
        for (r, d) in curve.rejection_ratios.iter().zip(&curve.mean) {
            reduction.push(vec![mode.to_string(), r.to_string(), d.to_string()]);
        }
        for sol in &s.solutions {
            tubes.extend(tube_rows(&sol.tube, &[mode.to_string(), sol.alpha.to_string()]));
        }
    }
    ctx.out.table(
        "area_reduction_by_mode",
        &csv_text(&["mode", "rejection_ratio", "dA"], reduction)?,
    )?;
    ctx.out.table(
        "mode_tubes",
        &csv_text(&["mode", "alpha", "t", "channel", "lower", "upper"], tubes)?,
    )?;
    let train_counts: BTreeMap<String, usize> = o.sweeps.iter().map(|(m, s)| (m.to_string(), s.pool_sizes[0])).collect();
    ctx.out.json(
        "pipeline",
        &json!({
            "scenarios": o.scenarios,
            "train": o.train.len(),
            "validation": o.validation.len(),
            "training_per_mode": train_counts,
            "classifier_accuracy": o.classifier_accuracy,
            "majority_baseline": o.majority_baseline,
            "hyperplane": o.hyperplane,
        }),
    )?;
    let unproven: Vec<f64> = o
        .sweeps
        .values()
        .flat_map(|s| s.solutions.iter().filter(|x| !x.proven_optimal).map(|x| x.alpha))
        .collect();
    finish(ctx.out, &unproven)
}
