use biasgraph::fixture::write_planted_fixture;
use biasgraph::ingest::load_bundle;
use biasgraph::probes::{train_all_probes, ProbeSettings};
use biasgraph::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn probe_training(c: &mut Criterion) {
    let dir = tempfile::TempDir::new().unwrap();
    write_planted_fixture(dir.path(), 1).unwrap();
    let ds = load_bundle(dir.path()).unwrap();
    let settings = ProbeSettings::default();
    let layers = vec!["layer3".to_string()];

    let mut group = c.benchmark_group("train_all_probes");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| train_all_probes(&ds, &layers, &settings, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, probe_training);
criterion_main!(benches);
