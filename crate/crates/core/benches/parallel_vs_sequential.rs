use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use conceptq::harness::{
    generate_world, run_experiment_1_with, sample_with_noise, Exp1Config, World, WorldSpec,
};
use conceptq::learner::{NegativeMethod, QueryType};
use conceptq::negatives::{likelihood_negatives_with, rocchio_negatives_with};
use conceptq::query::evaluate_with;
use conceptq::Execution;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn world() -> World {
    let spec = WorldSpec {
        items: 20_000,
        concepts: 4,
        extension_floor: 1_500,
        ..WorldSpec::desk()
    };
    generate_world(&spec, 1).expect("bench world")
}

fn bench_evaluate(c: &mut Criterion) {
    let w = world();
    let query = &w.concepts[0].query;
    let mut group = c.benchmark_group("evaluate");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| evaluate_with(black_box(query), &w.data, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_negatives(c: &mut Criterion) {
    let w = world();
    let s = sample_with_noise(&w.concepts[0], &w.data, 500, 0.1, 3).unwrap();
    let mut group = c.benchmark_group("negatives");
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new("likelihood", name), |b| {
            b.iter(|| likelihood_negatives_with(black_box(&s), &w.data, exec).unwrap())
        });
        group.bench_function(BenchmarkId::new("rocchio", name), |b| {
            b.iter(|| rocchio_negatives_with(black_box(&s), &w.data, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_grid(c: &mut Criterion) {
    let w = world();
    let config = Exp1Config {
        sample_sizes: vec![50, 200],
        noise_ratios: vec![0.0, 0.1],
        discard_thresholds: vec![0.0, 0.1],
        methods: vec![NegativeMethod::Likelihood, NegativeMethod::Rocchio],
        query_types: vec![QueryType::Dt, QueryType::Items],
        repeats: 1,
        ..Exp1Config::desk()
    };
    let mut group = c.benchmark_group("exp1_grid");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment_1_with(&w, black_box(&config), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluate, bench_negatives, bench_grid);
criterion_main!(benches);
