use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pnpch_bench::{patterns, smooth};
use pnpch_core::{
    div_coeff_grad, edge_average, laplace, solve_zero_mean, EllipticProblem, PeriodicGrid,
};

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operators");
    for n in [64, 128] {
        let grid = PeriodicGrid::new(2, n, -3.0, 3.0).unwrap();
        let u = smooth(&grid);
        let d = edge_average(&u);
        group.bench_with_input(BenchmarkId::new("laplace", n), &u, |b, u| {
            b.iter(|| laplace(black_box(u)))
        });
        group.bench_with_input(BenchmarkId::new("div_coeff_grad", n), &u, |b, u| {
            b.iter(|| div_coeff_grad(black_box(&d), black_box(u)))
        });
    }
    group.finish();
}

fn elliptic(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_zero_mean");
    for n in [32, 64] {
        let grid = PeriodicGrid::new(2, n, -3.0, 3.0).unwrap();
        let d = edge_average(&smooth(&grid));
        let mut f = laplace(&smooth(&grid));
        f.remove_mean();
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            b.iter(|| solve_zero_mean(&EllipticProblem::new(&d, f), 1e-10, 1000).unwrap())
        });
    }
    group.finish();
}

fn newton_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("newton_step");
    group.sample_size(10);
    for n in [32, 64] {
        let (stepper, state) = patterns(n, 0.05);
        group.bench_with_input(BenchmarkId::new("patterns_2d", n), &state, |b, s| {
            b.iter(|| stepper.step(black_box(s)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, operators, elliptic, newton_step);
criterion_main!(benches);
