//! Benchmarks for the hot paths of the pipeline: the marginal recursion with
//! and without memoization across depths, the exact counting oracle, table
//! evaluation, threshold bisection, and lattice box counting.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polyvol_core::{
    alpha_threshold, count_upper, exact_count, random_fmd, Approximator, ConstraintSet,
    DepthBudget, EffectiveCap, Graph, GridParams, Params, UpperBoundSet,
};

fn estimated_count_depth_sweep(c: &mut Criterion) {
    let params = Params::new(20, 9).unwrap();
    let g = Graph::path(4);
    let mut group = c.benchmark_group("estimated-count");
    for k in 1..=3u32 {
        group.bench_with_input(BenchmarkId::new("memoized", k), &k, |b, &k| {
            b.iter(|| {
                let mut approx = Approximator::new(params);
                approx.log_z(&g, DepthBudget::new(k)).unwrap()
            })
        });
        group.bench_with_input(BenchmarkId::new("naive", k), &k, |b, &k| {
            b.iter(|| {
                let mut approx = Approximator::without_memo(params);
                approx.log_z(&g, DepthBudget::new(k)).unwrap()
            })
        });
    }
    group.finish();
}

fn exact_count_oracle(c: &mut Criterion) {
    let params = Params::new(20, 9).unwrap();
    let beta = ConstraintSet::empty();
    let mut group = c.benchmark_group("exact-count");
    for m in [3u32, 5] {
        let g = Graph::path(m);
        group.bench_with_input(BenchmarkId::new("path", m), &g, |b, g| {
            b.iter(|| exact_count(g, &params, &beta).unwrap())
        });
    }
    group.finish();
}

fn table_evaluation(c: &mut Criterion) {
    let params = Params::new(20, 9).unwrap();
    let table = random_fmd(7, 3, &params);
    let ecap = EffectiveCap::none();
    c.bench_function("table-distribution", |b| b.iter(|| table.f_dist(ecap)));
    c.bench_function("table-single-value", |b| {
        b.iter(|| table.eval_f(3, ecap).unwrap())
    });
}

fn threshold_bisection(c: &mut Criterion) {
    c.bench_function("alpha-threshold-degree-3", |b| {
        b.iter(|| alpha_threshold(3, 1e-9).unwrap())
    });
}

fn lattice_box_count(c: &mut Criterion) {
    let grid = GridParams::from_alpha(40, 0.25).unwrap();
    let g = Graph::path(2);
    let bounds = UpperBoundSet::full(&grid, 2);
    c.bench_function("box-count-edge", |b| {
        b.iter(|| count_upper(&g, &grid, &bounds).unwrap())
    });
}

criterion_group!(
    benches,
    estimated_count_depth_sweep,
    exact_count_oracle,
    table_evaluation,
    threshold_bisection,
    lattice_box_count
);
criterion_main!(benches);
