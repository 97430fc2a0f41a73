use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use oculobench_bench::responses;
use oculobench_core::parser::extract_labels;

fn parse(c: &mut Criterion) {
    let texts = responses();
    let bytes: usize = texts.iter().map(String::len).sum();
    let mut g = c.benchmark_group("extract_labels");
    g.throughput(Throughput::Bytes(bytes as u64));
    g.bench_function("mixed_replies", |b| {
        b.iter(|| {
            for t in &texts {
                let _ = black_box(extract_labels(black_box(t)));
            }
        })
    });
    g.finish();
}

criterion_group!(benches, parse);
criterion_main!(benches);
