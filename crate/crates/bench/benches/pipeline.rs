use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use marf::features::extract_features;
use marf::scan::{cluster_scan, DEFAULT_JUMP_THRESHOLD};
use marf_bench::fixture;

fn pipeline(c: &mut Criterion) {
    let fx = fixture(100);
    let clusters: Vec<_> = fx
        .scans
        .iter()
        .map(|s| cluster_scan(s, DEFAULT_JUMP_THRESHOLD).unwrap())
        .collect();

    let mut g = c.benchmark_group("per_scan");
    g.throughput(Throughput::Elements(fx.scans.len() as u64));
    g.bench_function("cluster", |b| {
        b.iter(|| {
            for s in &fx.scans {
                black_box(cluster_scan(s, DEFAULT_JUMP_THRESHOLD).unwrap());
            }
        })
    });
    g.bench_function("features", |b| {
        b.iter(|| {
            for (s, cs) in fx.scans.iter().zip(&clusters) {
                for c in cs {
                    black_box(extract_features(c, s));
                }
            }
        })
    });
    g.finish();

    let mut g = c.benchmark_group("per_cluster");
    g.throughput(Throughput::Elements(fx.features.len() as u64));
    g.bench_function("predict", |b| {
        b.iter(|| {
            for x in &fx.features {
                black_box(fx.model.predict(x));
            }
        })
    });
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = pipeline
}
criterion_main!(benches);
