use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ers_bench::{lane_keeping, normal_two_step};
use ers_core::solver::{descending_grid, solve_exact, sweep, ErsInstance, SolveConfig};
use std::hint::black_box;

fn exact(c: &mut Criterion) {
    let cfg = SolveConfig::default();
    let mut g = c.benchmark_group("solve_exact");
    g.sample_size(10);
    for n in [100, 500] {
        let data = lane_keeping(n, 0);
        for k in [1, 5, 10] {
            let inst = ErsInstance::with_count(data.clone(), n - k).unwrap();
            g.bench_with_input(BenchmarkId::new(format!("lane_keeping_n{n}"), k), &inst, |b, inst| {
                b.iter(|| solve_exact(black_box(inst), &cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let cfg = SolveConfig::default();
    let data = normal_two_step(200, 3);
    let grid = descending_grid(1.0, 0.8, 0.02);
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    for accelerated in [false, true] {
        let name = if accelerated { "accelerated" } else { "independent" };
        g.bench_function(name, |b| b.iter(|| sweep(black_box(&data), &grid, &cfg, accelerated).unwrap()));
    }
    g.finish();
}

fn workers(c: &mut Criterion) {
    let data = lane_keeping(500, 1);
    let inst = ErsInstance::with_count(data, 490).unwrap();
    let mut g = c.benchmark_group("workers");
    g.sample_size(10);
    for w in [1, 2, 4] {
        let cfg = SolveConfig::default().with_workers(w);
        g.bench_with_input(BenchmarkId::from_parameter(w), &cfg, |b, cfg| b.iter(|| solve_exact(&inst, cfg).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, exact, sweeps, workers);
criterion_main!(benches);
