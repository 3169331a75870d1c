use ers_core::solver::{
    bigm_constraints_hold, bigm_min_area, build_instance, solve_exact, solve_milp_textbook, solve_naive, sweep,
    ErsInstance, SolveConfig,
};
use ers_core::store::ChannelDataset;
use ers_core::tube::{contains, empirical_probability};
use proptest::prelude::*;

/// Random instance: N in [4, 12], 1..=5 steps, one or two channels, k in [1, 4].
/// Values are drawn from a coarse grid so ties are common.
fn instance() -> impl Strategy<Value = (ChannelDataset, usize)> {
    sized(4..=12, 1..=5)
}

fn sized(
    n: std::ops::RangeInclusive<usize>,
    steps: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = (ChannelDataset, usize)> {
    (n, steps, 1usize..=2, 1usize..=4).prop_flat_map(|(n, steps, n_c, k)| {
        let k = k.min(n - 1);
        prop::collection::vec(-8i32..=8, n * steps * n_c).prop_map(move |raw| {
            let values: Vec<f64> = raw.iter().map(|&v| v as f64 * 0.25).collect();
            let ids = (0..n).map(|i| format!("t{i}")).collect();
            let names = (0..n_c).map(|c| format!("c{c}")).collect();
            let data = ChannelDataset::from_values(ids, names, steps, 0.1, values).unwrap();
            (data, n - k)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn three_solvers_agree((data, m) in instance()) {
        let inst = ErsInstance::with_count(data, m).unwrap();
        let cfg = SolveConfig::default();
        let exact = solve_exact(&inst, &cfg).unwrap();
        let naive = solve_naive(&inst).unwrap();
        let milp = solve_milp_textbook(&inst, &cfg).unwrap();
        prop_assert!(exact.proven_optimal && milp.proven_optimal);
        prop_assert_eq!(exact.area, naive.area);
        prop_assert_eq!(&exact.selection, &naive.selection);
        prop_assert!((milp.area - naive.area).abs() <= 1e-9);
        prop_assert_eq!(&milp.selection, &naive.selection);
    }

    #[test]
    fn parallel_matches_serial((data, m) in instance()) {
        let inst = ErsInstance::with_count(data, m).unwrap();
        let one = solve_exact(&inst, &SolveConfig::default()).unwrap();
        let four = solve_exact(&inst, &SolveConfig::default().with_workers(4)).unwrap();
        prop_assert_eq!(one.area, four.area);
        prop_assert_eq!(one.selection, four.selection);
    }

    #[test]
    fn solutions_are_feasible((data, m) in instance()) {
        let inst = ErsInstance::with_count(data.clone(), m).unwrap();
        let sol = solve_exact(&inst, &SolveConfig::default()).unwrap();
        prop_assert!(sol.selection.iter().filter(|&&b| b).count() >= inst.m());
        prop_assert_eq!(sol.area, sol.tube.area());
        for i in sol.selected() {
            prop_assert!(contains(&sol.tube, data.row(i)).unwrap());
        }
        let p = empirical_probability(&sol.tube, &data).unwrap();
        prop_assert!(p >= inst.alpha() - 1.0 / data.len() as f64);
    }

    #[test]
    fn area_monotone_in_alpha((data, _m) in instance()) {
        let n = data.len();
        let mut prev = f64::INFINITY;
        for m in (1..=n).rev() {
            let inst = ErsInstance::with_count(data.clone(), m).unwrap();
            let a = solve_exact(&inst, &SolveConfig::default()).unwrap().area;
            prop_assert!(a <= prev);
            prev = a;
        }
    }

    #[test]
    fn bigm_matches_pointwise_bounds((data, m) in sized(2..=8, 1..=4)) {
        let inst = ErsInstance::with_count(data.clone(), m).unwrap();
        let n = data.len();
        for bits in 1u32..(1 << n) {
            let b: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            let tube = inst.tube_of(&b).unwrap();
            prop_assert!(bigm_constraints_hold(&inst, &b, &tube));
            let lp = bigm_min_area(&inst, &b).unwrap();
            prop_assert!((lp - tube.area()).abs() <= 1e-9);
        }
    }

    #[test]
    fn accelerated_sweep_never_beats_exact((data, _m) in instance()) {
        let grid = [1.0, 0.9, 0.8, 0.7, 0.6];
        let cfg = SolveConfig::default();
        let exact = sweep(&data, &grid, &cfg, false).unwrap();
        let fast = sweep(&data, &grid, &cfg, true).unwrap();
        for (e, f) in exact.areas().iter().zip(fast.areas()) {
            prop_assert!(f >= *e);
        }
        prop_assert!(fast.areas().windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn worked_examples() {
    let d = ChannelDataset::from_rows(&[vec![0.0], vec![0.1], vec![0.2], vec![10.0]], 1.0).unwrap();
    let sol = solve_exact(&build_instance(&d, 0.75).unwrap(), &SolveConfig::default()).unwrap();
    assert_eq!(sol.selected(), vec![0, 1, 2]);
    assert!((sol.area - 0.2).abs() < 1e-12);

    let d = ChannelDataset::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 3.0]], 1.0).unwrap();
    let sol = solve_exact(&build_instance(&d, 2.0 / 3.0).unwrap(), &SolveConfig::default()).unwrap();
    assert_eq!(sol.selected(), vec![0, 1]);
    assert_eq!(sol.area, 2.0);
}
