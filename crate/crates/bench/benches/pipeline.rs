use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use nirs_bench::fixture;
use nirs_core::process_pipeline;
use nirs_core::wire::{FrameStreamParser, StreamItem};
use std::hint::black_box;

fn pipeline(c: &mut Criterion) {
    let fx = fixture(20.0, 40.0, 2);
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    group.throughput(Throughput::Elements(fx.frames.len() as u64));

    group.bench_function("process_60s", |b| {
        b.iter(|| process_pipeline(black_box(&fx.frames), &fx.layout, &fx.optics, &fx.pipeline, &fx.markers).unwrap())
    });
    group.bench_function("decode_and_process_60s", |b| {
        b.iter(|| {
            let mut frames = Vec::with_capacity(fx.frames.len());
            FrameStreamParser::new().feed_with(black_box(&fx.bytes), |item| {
                if let StreamItem::Frame(f) = item {
                    frames.push(f);
                }
            });
            process_pipeline(&frames, &fx.layout, &fx.optics, &fx.pipeline, &fx.markers).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
