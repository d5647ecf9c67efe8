use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use seqfuse::config::load_scenario;
use seqfuse::distributions::Hypothesis;
use seqfuse::exec::Execution;
use seqfuse::montecarlo::estimate_with;

const TRIALS: u64 = 2_000;

fn modes() -> Vec<(&'static str, Execution)> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    vec![("sequential", Execution::Sequential), ("parallel", Execution::Parallel { workers: threads })]
}

fn bench_estimate(c: &mut Criterion) {
    let mut group = c.benchmark_group("estimate");
    group.sample_size(10);
    for preset in ["example1", "csprt-fig3", "glr-fading"] {
        let s = load_scenario(preset).unwrap();
        for (label, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(label, preset), &s, |b, s| {
                b.iter(|| estimate_with(black_box(s), Hypothesis::H1, TRIALS, 1, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_estimate);
criterion_main!(benches);
