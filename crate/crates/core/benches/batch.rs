use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use manet_qos::batch::{replicate, run_sequential};
use manet_qos::paper;
use manet_qos::Protocol;

fn batches(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_batch");
    group.sample_size(10);
    for seeds in [4u32, 16] {
        let scenarios = replicate(&paper::overhead_network(30, Protocol::AodvQos), seeds);
        group.bench_with_input(BenchmarkId::new("sequential", seeds), &scenarios, |b, s| {
            b.iter(|| run_sequential(s))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", seeds), &scenarios, |b, s| {
            b.iter(|| manet_qos::batch::run_parallel(s))
        });
    }
    group.finish();
}

criterion_group!(benches, batches);
criterion_main!(benches);
