use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use intersnap::par::{run_batch, Execution};
use intersnap::sim::presets::random_scenario;

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario_batch");
    group.sample_size(10);
    for runs in [2u64, 8] {
        let jobs: Vec<_> = (0..runs).map(|s| (random_scenario(s), s)).collect();
        for (name, mode) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, runs), &jobs, |b, jobs| {
                b.iter(|| run_batch(jobs.clone(), mode, |w| w.state_hash()))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
