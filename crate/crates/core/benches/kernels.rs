//! Throughput of the data-parallel kernels on the default rayon pool versus a
//! one-thread pool. Run with `--no-default-features` to time the sequential
//! build instead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;
use volterra_core::algebra::combine_nm;
use volterra_core::conv::{conv_order_n, VolterraOperator};
use volterra_core::outer::outer_conv;
use volterra_core::perturb::{deviation_experiment, dft, DeviationConfig};
use volterra_core::rank::{rank_experiment, RankConfig, RankExperiment};
use volterra_core::rng::{stream, unit_gaussian};
use volterra_core::tensor::Tensor;

fn pools() -> Vec<(&'static str, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().expect("default pool");
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("one-thread pool");
    vec![("pool", default), ("one-thread", single)]
}

fn order_three(c: &mut Criterion) {
    let mut r = stream(1, 0);
    let h = unit_gaussian(&mut r, &[7, 7, 7]);
    let x = unit_gaussian(&mut r, &[512]);
    let mut group = c.benchmark_group("conv_order_3");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            pool.install(|| b.iter(|| conv_order_n(black_box(&h), &[&x, &x, &x], 1, 0).unwrap()))
        });
    }
    group.finish();
}

fn conv_2d(c: &mut Criterion) {
    let mut r = stream(2, 0);
    let h = unit_gaussian(&mut r, &[9, 9]);
    let x = unit_gaussian(&mut r, &[96, 96]);
    let mut group = c.benchmark_group("conv_2d");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            pool.install(|| b.iter(|| conv_order_n(black_box(&h), &[&x], 1, 4).unwrap()))
        });
    }
    group.finish();
}

fn outer(c: &mut Criterion) {
    let mut r = stream(3, 0);
    let g = unit_gaussian(&mut r, &[5, 5]);
    let h1 = unit_gaussian(&mut r, &[9, 9]);
    let h2 = unit_gaussian(&mut r, &[9]);
    let mut group = c.benchmark_group("outer_conv");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            pool.install(|| b.iter(|| outer_conv(black_box(&g), &[&h1, &h2], 1, 1).unwrap()))
        });
    }
    group.finish();
}

fn fusion(c: &mut Criterion) {
    let mut r = stream(4, 0);
    let op = |r: &mut _| {
        let k: Vec<Tensor> =
            vec![Tensor::scalar(0.1), unit_gaussian(r, &[5]), unit_gaussian(r, &[5, 5]), unit_gaussian(r, &[5, 5, 5])];
        VolterraOperator::new(k, 1, 1, 0).unwrap()
    };
    let (g, h) = (op(&mut r), op(&mut r));
    let mut group = c.benchmark_group("combine_nm");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            pool.install(|| b.iter(|| combine_nm(black_box(&g), &h, Some(4)).unwrap()))
        });
    }
    group.finish();
}

fn spectra(c: &mut Criterion) {
    let x = unit_gaussian(&mut stream(5, 0), &[1024]);
    let mut group = c.benchmark_group("dft_1024");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            pool.install(|| b.iter(|| dft(black_box(&x)).unwrap()))
        });
    }
    group.finish();
}

fn experiments(c: &mut Criterion) {
    let config = DeviationConfig { orders: (1..=5).collect(), trials: 20, ..DeviationConfig::default() };
    let rank = RankConfig { trials: 4, ..RankConfig::default() };
    let mut group = c.benchmark_group("experiments");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("deviation", label), |b| {
            pool.install(|| b.iter(|| deviation_experiment(black_box(&config)).unwrap()))
        });
        group.bench_function(BenchmarkId::new("rank-conv-3d", label), |b| {
            pool.install(|| b.iter(|| rank_experiment(RankExperiment::Conv3d, black_box(&rank), 0).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, order_three, conv_2d, outer, fusion, spectra, experiments);
criterion_main!(benches);
