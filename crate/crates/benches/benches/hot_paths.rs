use std::hint::black_box;
use std::io::Cursor;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pmco_core::bench::{desk_profile, Workload};
use pmco_core::checkpoint::{run_inline, CheckpointImage, Compression};
use pmco_core::decision::{benefit_eq1, OffloadFlag};
use pmco_core::protocol::{read_frame, write_frame, Frame, Opcode};
use pmco_core::tasks::Lcg64;

fn matmul(c: &mut Criterion) {
    let mut g = c.benchmark_group("matmul");
    g.sample_size(10);
    for n in [50usize, 100, 200] {
        let task = Workload::matmul(n, 42).task();
        g.throughput(Throughput::Elements((n * n * n) as u64));
        g.bench_with_input(BenchmarkId::from_parameter(n), &task, |b, t| {
            b.iter(|| run_inline(black_box(t), 1.0))
        });
    }
    g.finish();
}

fn random_bytes(len: usize) -> Vec<u8> {
    let mut rng = Lcg64::new(3);
    (0..len / 8).flat_map(|_| rng.next_f64().to_le_bytes()).collect()
}

fn image(c: &mut Criterion) {
    let state = random_bytes(1 << 20);
    let mut g = c.benchmark_group("image");
    g.throughput(Throughput::Bytes(state.len() as u64));
    for (name, comp) in [
        ("store", Compression::Store),
        ("gzip6", Compression::Gzip(6)),
        ("adaptive6", Compression::Adaptive(6)),
    ] {
        g.bench_function(BenchmarkId::new("seal_encode", name), |b| {
            b.iter(|| CheckpointImage::seal("b", 1, true, black_box(&state), comp).encode())
        });
        let bytes = CheckpointImage::seal("b", 1, true, &state, comp).encode();
        g.bench_function(BenchmarkId::new("decode_unseal", name), |b| {
            b.iter(|| {
                CheckpointImage::decode(black_box(&bytes))
                    .unwrap()
                    .unseal()
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn framing(c: &mut Criterion) {
    let mut g = c.benchmark_group("framing");
    for len in [64usize, 64 << 10, 4 << 20] {
        let frame = Frame::new(Opcode::CkptPush, vec![0xa5; len]);
        g.throughput(Throughput::Bytes(len as u64));
        g.bench_with_input(BenchmarkId::from_parameter(len), &frame, |b, f| {
            let mut buf = Vec::with_capacity(len + 5);
            b.iter(|| {
                buf.clear();
                write_frame(&mut buf, f).unwrap();
                read_frame(&mut Cursor::new(&buf)).unwrap()
            })
        });
    }
    g.finish();
}

fn decision(c: &mut Criterion) {
    let g = desk_profile();
    let app = Workload::matmul(700, 42).app(OffloadFlag::Normal);
    c.bench_function("benefit", |b| {
        b.iter(|| benefit_eq1(black_box(&g), black_box(&app)).unwrap())
    });
}

criterion_group!(benches, matmul, image, framing, decision);
criterion_main!(benches);
