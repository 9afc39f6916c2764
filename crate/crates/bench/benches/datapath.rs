use bbfp_bench::{blocks, configs, corpus, matrix};
use bbfp_core::arith::GemmOptions;
use bbfp_core::nonlinear::{NonlinearConfig, NonlinearUnit, Op};
use bbfp_core::{dot_product, encode_block, gemm};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn encode(c: &mut Criterion) {
    let mut group = c.benchmark_group("encode");
    let values = corpus(32 * 1024, 1);
    group.throughput(Throughput::Elements(values.len() as u64));
    for cfg in configs() {
        group.bench_with_input(BenchmarkId::from_parameter(cfg), &cfg, |b, cfg| {
            b.iter(|| {
                for chunk in values.chunks(cfg.block_size) {
                    black_box(encode_block(chunk, cfg).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn dot(c: &mut Criterion) {
    let mut group = c.benchmark_group("dot_product");
    for cfg in configs() {
        let xs = blocks(&cfg, 256, 2);
        let ys = blocks(&cfg, 256, 3);
        group.throughput(Throughput::Elements((xs.len() * cfg.block_size) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(cfg), &cfg, |b, cfg| {
            b.iter(|| {
                for (x, y) in xs.iter().zip(&ys) {
                    black_box(dot_product(x, y, cfg).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    group.sample_size(20);
    let cfg = configs()[0];
    for n in [32usize, 128] {
        let a = matrix(n, n, 4);
        let b = matrix(n, n, 5);
        group.throughput(Throughput::Elements((n * n * n) as u64));
        group.bench_with_input(BenchmarkId::new("BBFP(4,2)", n), &n, |bench, _| {
            bench.iter(|| black_box(gemm(&a, &b, &cfg, GemmOptions::default()).unwrap()))
        });
    }
    group.finish();
}

fn nonlinear(c: &mut Criterion) {
    let unit = NonlinearUnit::new(NonlinearConfig::default()).unwrap();
    let x: Vec<f64> = corpus(128, 6).iter().map(|v| v * 4.0).collect();
    let mut group = c.benchmark_group("nonlinear");
    for op in Op::ALL {
        group.bench_function(format!("{op:?}"), |b| b.iter(|| black_box(unit.apply(op, &x).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, encode, dot, matmul, nonlinear);
criterion_main!(benches);
