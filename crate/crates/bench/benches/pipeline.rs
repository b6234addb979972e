use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use isaac_bench::{auditing_set, oracle_run};
use isaac_core::intervention::{sample_matched_pairs, SamplingPlan};
use isaac_core::run_audit_on;

fn bench_sampling(c: &mut Criterion) {
    let set = auditing_set(60, 5);
    let plan = SamplingPlan::default();
    c.bench_function("sample_matched_pairs/60_targets", |b| {
        b.iter(|| {
            for t in &set.targets {
                black_box(sample_matched_pairs(t, &plan).unwrap());
            }
        })
    });
}

fn bench_audit(c: &mut Criterion) {
    let set = auditing_set(60, 6);
    let mut group = c.benchmark_group("run_audit");
    group.sample_size(10).measurement_time(Duration::from_secs(20));
    for oracle in ["prior_sensitive", "composition_shortcut"] {
        let config = oracle_run(oracle, 1000);
        group.bench_function(oracle, |b| {
            b.iter(|| {
                let endpoints = config
                    .models
                    .iter()
                    .map(|m| (m.clone(), config.build_endpoint(m, &set).unwrap()))
                    .collect();
                black_box(run_audit_on(&config, &set, endpoints).unwrap())
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sampling, bench_audit);
criterion_main!(benches);
