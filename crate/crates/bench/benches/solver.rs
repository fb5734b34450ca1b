use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use relaysel_core::simplified::AlphaCurve;
use relaysel_core::threshold::solve_phi;
use relaysel_core::{RewardDistribution, SimplifiedSpec, SolverGrid, WakeModel};

fn thresholds(c: &mut Criterion) {
    let dist = RewardDistribution::preset("progress10").unwrap();
    let model = WakeModel::new(1.0).unwrap();
    let mut g = c.benchmark_group("solve_phi");
    g.sample_size(10);
    for (points, k) in [(50, 20), (100, 20), (100, 50)] {
        let grid = SolverGrid::new(points, points).unwrap();
        g.bench_with_input(BenchmarkId::new(format!("{points}x{points}"), k), &k, |b, &k| {
            b.iter(|| solve_phi(grid, &dist, &model, black_box(5.0), k).unwrap())
        });
    }
    g.finish();
}

fn alpha(c: &mut Criterion) {
    let dist = RewardDistribution::preset("progress10").unwrap();
    c.bench_function("alpha_fixed_point", |b| {
        b.iter(|| SimplifiedSpec::new(11, 1.0, black_box(20.0), &dist).unwrap().solve_alpha())
    });
    let curve = AlphaCurve::new(dist.table(), 11);
    c.bench_function("alpha_for_gamma", |b| b.iter(|| curve.alpha_for(black_box(0.8))));
}

criterion_group!(benches, thresholds, alpha);
criterion_main!(benches);
