use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use nirs_bench::fixture;
use nirs_core::wire::{crc16, decode_frame, encode_frame_into, FrameStreamParser, StreamItem, FRAME_LEN};
use std::hint::black_box;

fn wire(c: &mut Criterion) {
    let fx = fixture(5.0, 5.0, 1);
    let mut group = c.benchmark_group("wire");
    group.throughput(Throughput::Elements(fx.frames.len() as u64));

    group.bench_function("encode", |b| {
        let mut out = vec![0u8; fx.bytes.len()];
        b.iter(|| {
            for (f, chunk) in fx.frames.iter().zip(out.chunks_exact_mut(FRAME_LEN)) {
                encode_frame_into(black_box(f), chunk.try_into().unwrap());
            }
        })
    });
    group.bench_function("decode_aligned", |b| {
        b.iter(|| fx.bytes.chunks_exact(FRAME_LEN).filter(|c| decode_frame(black_box(c)).is_ok()).count())
    });
    group.bench_function("stream_parser", |b| {
        b.iter_batched(
            FrameStreamParser::new,
            |mut parser| {
                let mut n = 0usize;
                for chunk in fx.bytes.chunks(4096) {
                    parser.feed_with(chunk, |item| n += matches!(item, StreamItem::Frame(_)) as usize);
                }
                n
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();

    c.bench_function("crc16_frame", |b| b.iter(|| crc16(black_box(&fx.bytes[..FRAME_LEN - 2]))));
}

criterion_group!(benches, wire);
criterion_main!(benches);
