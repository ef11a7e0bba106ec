use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use summrank::config::RunConfig;
use summrank::par::Execution;
use summrank::pipeline::{candidate_pools, train_importance};
use summrank::synthetic::{generate, SyntheticConfig};

fn bench_candidate_pools(c: &mut Criterion) {
    let clusters = generate(&SyntheticConfig {
        clusters: 6,
        ..Default::default()
    })
    .unwrap();
    let base = RunConfig {
        lambdas: vec![0.3, 0.6, 0.9],
        ..Default::default()
    };
    let (word, sentence) = train_importance(&clusters, &base).unwrap();

    let mut group = c.benchmark_group("candidate_pools");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let cfg = RunConfig {
            execution: exec,
            ..base.clone()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| candidate_pools(black_box(&clusters), &word, &sentence, cfg, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_candidate_pools);
criterion_main!(benches);
