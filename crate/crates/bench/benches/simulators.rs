//! Costs of the exact-arithmetic oracles relative to the closed forms.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use traincost_core::cost::CommParams;
use traincost_core::sim::{
    simulate_pipeline_schedule, simulate_ring_allreduce, simulate_tree_allreduce,
};

fn bench_ring(c: &mut Criterion) {
    let params = CommParams { alpha: 1.8e-5, beta_eff: 2.4e-10 };
    let mut group = c.benchmark_group("sim/ring-allreduce");
    for p in [8u64, 64, 512] {
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, &p| {
            b.iter(|| simulate_ring_allreduce(params, p, 1.0e8))
        });
    }
    group.finish();
}

fn bench_tree(c: &mut Criterion) {
    let params = CommParams { alpha: 1.8e-5, beta_eff: 2.4e-10 };
    c.bench_function("sim/tree-allreduce-p1024-k4", |b| {
        b.iter(|| simulate_tree_allreduce(params, 1024, 262_144.0, 4))
    });
}

fn bench_pipeline_schedule(c: &mut Criterion) {
    let fw: Vec<f64> = (0..8).map(|i| 0.5 + 0.1 * i as f64).collect();
    let bw: Vec<f64> = (0..8).map(|i| 0.9 - 0.05 * i as f64).collect();
    c.bench_function("sim/pipeline-schedule-p8-s32", |b| {
        b.iter(|| simulate_pipeline_schedule(&fw, &bw, 32, 64, 10.0))
    });
}

criterion_group!(benches, bench_ring, bench_tree, bench_pipeline_schedule);
criterion_main!(benches);
