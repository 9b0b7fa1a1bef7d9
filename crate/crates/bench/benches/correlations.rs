//! Output-correlation estimation cost as the lag horizon grows.
//!
//! Run with `cargo bench -p omar-bench --bench correlations`.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use omar_bench::bench_record;
use omar_core::signal::{assemble_toeplitz, correlations};

fn correlation_sequence(c: &mut Criterion) {
    let rec = bench_record(60.0, 20.0, 7);
    let mut group = c.benchmark_group("correlations");
    group.sample_size(10);
    for j_b in [50usize, 100, 189] {
        group.bench_with_input(BenchmarkId::new("estimate", j_b), &j_b, |b, &j| {
            b.iter(|| black_box(correlations(&rec, j).unwrap()))
        });
    }
    let corrs = correlations(&rec, 189).unwrap();
    group.bench_function("assemble-1890", |b| {
        b.iter(|| black_box(assemble_toeplitz(&corrs)))
    });
    group.finish();
}

criterion_group!(benches, correlation_sequence);
criterion_main!(benches);
