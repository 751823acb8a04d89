use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use resctl_bench::{filled, lorenz_layer};
use resctl_core::{quantize, ridge_solve, FixedConfig};

fn esn_derivative(c: &mut Criterion) {
    let mut g = c.benchmark_group("esn_derivative");
    for n in [50, 200, 500] {
        let esn = lorenz_layer(n);
        let y = [1.0, -2.0, 20.0];
        let r = [8.5, 8.5, 27.0];
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| esn.esn_derivative(black_box(&y), black_box(&r)).unwrap())
        });
    }
    g.finish();
}

fn fixed_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("fixed_step");
    for n in [50, 200] {
        let esn = lorenz_layer(n);
        let cfg = FixedConfig::circuit().with_dt(1e-3).with_input_shift(3);
        let (mut fixed, _) = quantize(&esn, &cfg).unwrap();
        let y: Vec<_> = [1.0, -2.0, 20.0].map(|x| fixed.encode_input(x)).to_vec();
        let r: Vec<_> = [8.5, 8.5, 27.0].map(|x| fixed.encode_input(x)).to_vec();
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fixed.fixed_step(black_box(&y), black_box(&r)).unwrap())
        });
    }
    g.finish();
}

fn ridge(c: &mut Criterion) {
    let mut g = c.benchmark_group("ridge_solve");
    g.sample_size(20);
    for n in [50, 200] {
        let u = filled(n, 20_000, 0.1);
        let v = filled(3, 20_000, 0.7);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ridge_solve(black_box(&u), black_box(&v), 1e-4).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, esn_derivative, fixed_step, ridge);
criterion_main!(benches);
