use std::fs::File;

use ers_core::classifier::label_transitions;
use ers_core::pipeline::{run_pipeline, PipelineConfig};
use ers_core::solver::{descending_grid, SolveConfig};
use ers_core::store::{load_dataset, load_mode_labels};
use ers_core::synth::{
    export_dataset, generate_grid, logs_to_dataset, outliers_separated, read_features, simulate, simulate_all,
    trajectory_schema, ScenarioParams, Variations,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ScenarioParams> {
    (15.0..20.0f64, 0usize..=3, 8.0..120.0f64, 10.0..20.0f64, 0.0..0.5f64, any::<u64>()).prop_map(
        |(ego_speed, vehicle_count, lead_gap, lead_speed_final, outlier_rate, seed)| ScenarioParams {
            ego_speed,
            vehicle_count,
            lead_gap,
            lead_speed_final,
            outlier_rate,
            adjacent_offsets: vec![-20.0, 25.0],
            seed,
            ..ScenarioParams::default()
        },
    )
}

fn small_grid() -> Vec<ScenarioParams> {
    let v = Variations {
        ego_speed: Some(vec![15.0, 18.0]),
        lead_gap: Some(vec![15.0, 60.0]),
        replicates: Some(5),
        ..Variations::default()
    };
    generate_grid(&ScenarioParams::default(), &v).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn simulated_logs_are_consistent(p in params(), horizon in 5usize..60) {
        let log = simulate(&p, horizon, 0.1).unwrap();
        prop_assert_eq!(log.horizon(), horizon);
        prop_assert!(log.is_kinematically_consistent());
        prop_assert_eq!(label_transitions(&log.blinker, horizon).unwrap(), log.modes.clone());
        prop_assert_eq!(log.observations.len(), horizon + 1);
        prop_assert_eq!(simulate(&p, horizon, 0.1).unwrap(), log);
    }

    #[test]
    fn params_json_round_trip(p in params()) {
        let text = serde_json::to_string(&p).unwrap();
        prop_assert_eq!(serde_json::from_str::<ScenarioParams>(&text).unwrap(), p);
    }
}

#[test]
fn outliers_stand_apart() {
    let logs = simulate_all(&small_grid(), 50, 0.1).unwrap();
    assert!(logs.iter().any(|l| l.is_outlier()) || logs.len() < 20);
    assert!(outliers_separated(&logs));
}

#[test]
fn export_reads_back() {
    let logs = simulate_all(&small_grid(), 30, 0.1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (t, l, f) = (dir.path().join("t.csv"), dir.path().join("l.csv"), dir.path().join("f.csv"));
    export_dataset(
        &logs,
        File::create(&t).unwrap(),
        File::create(&l).unwrap(),
        File::create(&f).unwrap(),
    )
    .unwrap();

    let back = load_dataset(&t, &trajectory_schema(0.1)).unwrap();
    let orig = logs_to_dataset(&logs).unwrap();
    assert_eq!(back.ids(), orig.ids());
    for (a, b) in back.trajectories().iter().zip(orig.trajectories()) {
        assert_eq!(a.samples, b.samples);
    }

    let labels = load_mode_labels(&l).unwrap();
    assert_eq!(labels.len(), logs.len());
    for ((id, mode), log) in labels.iter().zip(&logs) {
        assert_eq!((id.as_str(), mode.as_str()), (log.id.as_str(), log.mode().as_str()));
    }

    let rows = read_features(File::open(&f).unwrap()).unwrap();
    assert_eq!(rows.len(), logs.len() * 31);
    for (r, (log, t)) in rows.iter().zip(logs.iter().flat_map(|l| (0..=30).map(move |t| (l, t)))) {
        assert_eq!(r.id, log.id);
        assert_eq!(r.observation, log.observations[t]);
        assert_eq!(r.label, log.modes[t]);
    }
}

#[test]
fn pipeline_independent_of_workers() {
    let cfg = PipelineConfig {
        variations: Variations {
            ego_speed: Some(vec![15.0, 18.0]),
            lead_gap: Some(vec![15.0, 25.0, 90.0]),
            replicates: Some(6),
            ..Variations::default()
        },
        alphas: descending_grid(1.0, 0.7, 0.1),
        ..PipelineConfig::default()
    };
    let one = run_pipeline(&cfg, &SolveConfig::default()).unwrap();
    let four = run_pipeline(&cfg, &SolveConfig::default().with_workers(4)).unwrap();
    assert_eq!(one.overall, four.overall);
    assert_eq!(one.per_mode, four.per_mode);
    assert_eq!(one.hyperplane, four.hyperplane);
    let selections = |o: &ers_core::pipeline::PipelineOutcome| -> Vec<Vec<bool>> {
        o.sweeps.values().flat_map(|s| s.solutions.iter().map(|x| x.selection.clone())).collect()
    };
    assert_eq!(selections(&one), selections(&four));
    // round trip of the report through JSON
    let text = serde_json::to_string(&one.overall).unwrap();
    assert_eq!(serde_json::from_str::<ers_core::metrics::MetricsReport>(&text).unwrap(), one.overall);
}
