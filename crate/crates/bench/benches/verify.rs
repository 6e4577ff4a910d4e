use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polycheck_bench::{history, stream};
use polycheck_core::closure::{transitive_closure, ClosureMethod};
use polycheck_core::workload::Benchmark;
use polycheck_core::{builder, verify, RoundConfig, RoundVerifier, VerifyOptions};

fn one_shot(c: &mut Criterion) {
    let mut group = c.benchmark_group("verify");
    group.sample_size(10);
    for (b, n) in [
        (Benchmark::RmwOnly, 1000),
        (Benchmark::BlindWRw, 500),
        (Benchmark::ReadHeavy, 1000),
    ] {
        let h = history(b, n, 8, 200);
        group.bench_with_input(BenchmarkId::new(b.name(), n), &h, |bench, h| {
            bench.iter(|| verify(h, &VerifyOptions::default()))
        });
    }
    group.finish();
}

fn closure(c: &mut Criterion) {
    let h = history(Benchmark::BlindWRw, 1000, 8, 200);
    let e = builder::build(&h, true).unwrap();
    let dense = e.graph().to_dense();
    let mut group = c.benchmark_group("closure");
    group.sample_size(10);
    for m in [ClosureMethod::TopoSweep, ClosureMethod::Squaring, ClosureMethod::Bfs] {
        group.bench_function(format!("{m:?}"), |bench| {
            bench.iter(|| transitive_closure(&dense.graph, m))
        });
    }
    group.finish();
}

fn rounds(c: &mut Criterion) {
    let fragments = stream(Benchmark::RmwOnly, 2000, 8, 200, 200);
    let mut group = c.benchmark_group("rounds");
    group.sample_size(10);
    for gc in [true, false] {
        group.bench_function(if gc { "gc" } else { "no-gc" }, |bench| {
            bench.iter(|| {
                let mut v = RoundVerifier::new(RoundConfig {
                    gc,
                    ..RoundConfig::default()
                });
                for f in &fragments {
                    v.feed(f.clone()).unwrap();
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, one_shot, closure, rounds);
criterion_main!(benches);
