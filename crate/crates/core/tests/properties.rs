use std::collections::BTreeMap;

use ers_core::classifier::{classify, train_max_margin, EnvObservation, ModeLabel};
use ers_core::dist::{area_reduction_curve, quantile_interval, sample_dataset, DistributionKind, DistributionSpec};
use ers_core::metrics::{accuracy, constant_velocity_set, precision};
use ers_core::solver::{sweep, ErsInstance, SolveConfig, solve_exact};
use ers_core::store::ChannelDataset;
use ers_core::tube::Tube;
use proptest::prelude::*;

fn kind() -> impl Strategy<Value = DistributionKind> {
    prop_oneof![
        (-5.0..5.0f64, 0.1..4.0f64).prop_map(|(low, w)| DistributionKind::Uniform { low, high: low + w }),
        (-5.0..5.0f64, 0.1..3.0f64).prop_map(|(mean, std_dev)| DistributionKind::Normal { mean, std_dev }),
        (-1.0..1.0f64, 0.1..1.5f64).prop_map(|(mu, sigma)| DistributionKind::Lognormal { mu, sigma }),
        (-3.0..3.0f64, 0.1..2.0f64).prop_map(|(location, scale)| DistributionKind::ExtremeValue { location, scale }),
    ]
}

fn labelled(points: &[(Vec<f64>, ModeLabel)]) -> Vec<(EnvObservation, ModeLabel)> {
    points.iter().map(|(x, l)| (EnvObservation::new(0, x.clone()), *l)).collect()
}

/// Two clusters separated along the first feature by at least `gap`.
fn separable() -> impl Strategy<Value = Vec<(Vec<f64>, ModeLabel)>> {
    (prop::collection::vec((0.0..5.0f64, -3.0..3.0f64), 3..15), prop::collection::vec((0.0..5.0f64, -3.0..3.0f64), 3..15), 0.5..3.0f64)
        .prop_map(|(a, b, gap)| {
            let mut out: Vec<(Vec<f64>, ModeLabel)> =
                a.into_iter().map(|(x, y)| (vec![-x - gap / 2.0, y], ModeLabel::LaneKeeping)).collect();
            out.extend(b.into_iter().map(|(x, y)| (vec![x + gap / 2.0, y], ModeLabel::LaneChanging)));
            out
        })
}

fn tube(half: &[f64]) -> Tube {
    let upper = vec![half.to_vec(), half.to_vec()];
    let lower = vec![half.iter().map(|h| -h).collect(), half.iter().map(|h| -h).collect()];
    Tube::new(vec!["x".into(), "y".into()], 0.1, vec![1.0, 1.0], upper, lower).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn area_reduction_nondecreasing(k in kind(), n in 20usize..80, seed in 0u64..1000) {
        let data = sample_dataset(&DistributionSpec::new(k, n, seed), 0).unwrap();
        let grid: Vec<f64> = (0..=6).map(|j| 1.0 - 0.05 * j as f64).collect();
        let s = sweep(&data, &grid, &SolveConfig::default(), false).unwrap();
        let c = area_reduction_curve(&[s]).unwrap();
        prop_assert_eq!(c.mean[0], 0.0);
        for w in c.mean.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(c.mean.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn samples_deterministic_and_in_support(k in kind(), n in 1usize..200, seed in any::<u64>(), horizon in 0usize..3) {
        let spec = DistributionSpec::new(k, n, seed);
        let a = sample_dataset(&spec, horizon).unwrap();
        let b = sample_dataset(&spec, horizon).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert_eq!(a.len(), n);
        prop_assert_eq!(a.steps(), horizon + 1);
        match k {
            DistributionKind::Uniform { low, high } => {
                prop_assert!(a.values().iter().all(|v| *v >= low && *v <= high));
            }
            DistributionKind::Lognormal { .. } => prop_assert!(a.values().iter().all(|v| *v > 0.0)),
            _ => prop_assert!(a.values().iter().all(|v| v.is_finite())),
        }
    }

    #[test]
    fn spec_json_round_trip(k in kind(), n in 1usize..5000, seed in any::<u64>()) {
        let spec = DistributionSpec::new(k, n, seed);
        let text = serde_json::to_string(&spec).unwrap();
        prop_assert_eq!(serde_json::from_str::<DistributionSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn quantile_interval_nested(k in kind(), a in 0.05..0.9f64, d in 0.01..0.09f64) {
        let spec = DistributionSpec::new(k, 10, 0);
        let (l1, u1) = quantile_interval(&spec, a).unwrap();
        let (l2, u2) = quantile_interval(&spec, a + d).unwrap();
        prop_assert!(l2 <= l1 && u1 <= u2 && l1 < u1);
    }

    #[test]
    fn separable_data_fits_with_margin(points in separable()) {
        let ex = labelled(&points);
        let h = train_max_margin(&ex, 1e4, 1e-6).unwrap();
        for (e, l) in &ex {
            prop_assert_eq!(classify(&h, e).unwrap(), *l);
        }
        prop_assert!(h.margin > 0.0);
    }

    #[test]
    fn feature_scaling_does_not_change_predictions(points in separable(), s in 0.01..100.0f64) {
        let ex = labelled(&points);
        let scaled: Vec<_> = ex
            .iter()
            .map(|(e, l)| (EnvObservation::new(0, vec![e.features[0] * s, e.features[1]]), *l))
            .collect();
        // hard margin, where the bias is unique
        let h1 = train_max_margin(&ex, 1e4, 1e-6).unwrap();
        let h2 = train_max_margin(&scaled, 1e4, 1e-6).unwrap();
        for ((e1, l), (e2, _)) in ex.iter().zip(&scaled) {
            let (a, b) = (h1.score(&e1.features).unwrap(), h2.score(&e2.features).unwrap());
            prop_assert!((a - b).abs() <= 1e-3 * (1.0 + a.abs()), "{} vs {}", a, b);
            prop_assert_eq!(classify(&h2, e2).unwrap(), *l);
        }
    }

    #[test]
    fn training_is_pure(points in separable(), c in 0.1..10.0f64) {
        let ex = labelled(&points);
        prop_assert_eq!(train_max_margin(&ex, c, 1e-4).unwrap(), train_max_margin(&ex, c, 1e-4).unwrap());
    }

    #[test]
    fn precision_antitone_in_area(half in prop::collection::vec(0.0..3.0f64, 3), grow in prop::collection::vec(0.0..1.0f64, 3), v in 1.0..30.0f64) {
        let bigger: Vec<f64> = half.iter().zip(&grow).map(|(h, g)| h + g).collect();
        let data = ChannelDataset::from_values(vec!["a".into()], vec!["x".into(), "y".into()], 3, 0.1, vec![0.0; 6]).unwrap();
        let p = |t: Tube| {
            let tubes = BTreeMap::from([(0u8, t)]);
            precision(&data, &tubes, &[0u8], &[v]).unwrap().value
        };
        prop_assert!(p(tube(&half)) >= p(tube(&bigger)));
    }

    #[test]
    fn training_accuracy_reaches_alpha(values in prop::collection::vec(-4i32..=4, 24), m in 1usize..=8) {
        let values: Vec<f64> = values.iter().map(|&v| v as f64 * 0.5).collect();
        let ids = (0..8).map(|i| format!("t{i}")).collect();
        let data = ChannelDataset::from_values(ids, vec!["x".into()], 3, 1.0, values).unwrap();
        let inst = ErsInstance::with_count(data.clone(), m).unwrap();
        let sol = solve_exact(&inst, &SolveConfig::default()).unwrap();
        let tubes = BTreeMap::from([(ModeLabel::LaneKeeping, sol.tube)]);
        let acc = accuracy(&data, &tubes, &[ModeLabel::LaneKeeping; 8]).unwrap();
        prop_assert!(acc >= inst.alpha() - 1.0 / 8.0);
    }
}

#[test]
fn one_dimensional_max_margin_midpoint() {
    // closest opposite points are -1 and 2, so the hard-margin boundary is 0.5
    let pts: Vec<(Vec<f64>, ModeLabel)> = [-4.0, -3.0, -1.0]
        .iter()
        .map(|&x| (vec![x], ModeLabel::LaneKeeping))
        .chain([2.0, 3.5, 6.0].iter().map(|&x| (vec![x], ModeLabel::LaneChanging)))
        .collect();
    let h = train_max_margin(&labelled(&pts), 1e6, 1e-9).unwrap();
    let w = h.weights[0] / h.feature_scales[0];
    let boundary = h.feature_means[0] - h.bias / w;
    assert!((boundary - 0.5).abs() < 1e-3, "boundary {boundary}");
    // margin 1.5 in raw units, reported in standardized units
    assert!((h.margin * h.feature_scales[0] - 1.5).abs() < 1e-3);
}

#[test]
fn reach_area_matches_closed_form() {
    // Σ_t 2 channels × 2 v t dt × dt
    let (v, horizon, dt) = (12.0, 20, 0.1);
    let t = constant_velocity_set(v, horizon, dt).unwrap();
    let expected: f64 = (0..=horizon).map(|s| 2.0 * 2.0 * v * s as f64 * dt * dt).sum();
    assert!((t.area() - expected).abs() < 1e-9);
}
