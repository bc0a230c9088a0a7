use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use em_basin::population::pop_em;
use em_basin::quadrature::expect_tanh;
use em_basin::sample_em::{run_em, sample_em_step};
use em_basin::{EmConfig, GhRule};
use em_basin_bench::fixture;

fn quadrature(c: &mut Criterion) {
    let mut group = c.benchmark_group("gauss_hermite");
    for order in [61, 121, 241] {
        group.bench_with_input(BenchmarkId::new("rule", order), &order, |b, &m| {
            b.iter(|| GhRule::new(black_box(m)).unwrap())
        });
    }
    let rule = GhRule::default();
    group.bench_function("expect_tanh", |b| b.iter(|| expect_tanh(black_box(3.0), black_box(2.0), &rule)));
    group.bench_function("expect_tanh_saturated", |b| b.iter(|| expect_tanh(black_box(40.0), black_box(1.0), &rule)));
    group.finish();
}

fn operators(c: &mut Criterion) {
    let rule = GhRule::default();
    let mut group = c.benchmark_group("operators");
    for d in [2, 16] {
        let f = fixture(d, 10_000);
        group.bench_with_input(BenchmarkId::new("pop_em", d), &f, |b, f| {
            b.iter(|| pop_em(black_box(&f.theta), &f.model, &rule).unwrap())
        });
    }
    for n in [1_000, 100_000] {
        let f = fixture(4, n);
        group.bench_with_input(BenchmarkId::new("sample_em_step", n), &f, |b, f| {
            b.iter(|| sample_em_step(black_box(&f.theta), &f.dataset, 1.0).unwrap())
        });
    }
    let f = fixture(4, 10_000);
    group.bench_function("run_em", |b| {
        b.iter(|| run_em(black_box(&f.theta), &f.dataset, &f.model, &EmConfig::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, quadrature, operators);
criterion_main!(benches);
