//! Hot paths on a single worker versus the default pool.
//!
//! Built without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multidyadic::cases::SmConvention;
use multidyadic::grid::{sample_grid, TorusSpace};
use multidyadic::haar::{haar_forward, MultiFunction};
use multidyadic::kernel::{KernelDesc, OperatorHandle, QuadratureConfig};
use multidyadic::representation::{mc_reconstruct, McOptions};
use multidyadic::shift::{saturated_random_provider, shift_apply, ShiftSpec};

fn function(space: &TorusSpace) -> MultiFunction {
    MultiFunction::from_fn(space, |c| c.iter().enumerate().map(|(i, &x)| ((x * (i + 3)) % 11) as f64 - 5.0).sum())
}

#[cfg(feature = "parallel")]
fn pools() -> Vec<(&'static str, Option<rayon::ThreadPool>)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    vec![("1-thread", Some(one)), ("pool", None)]
}

#[cfg(not(feature = "parallel"))]
fn pools() -> Vec<(&'static str, Option<()>)> {
    vec![("sequential", None)]
}

#[cfg(feature = "parallel")]
fn run<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn run<R>(_: &Option<()>, f: impl FnOnce() -> R) -> R {
    f()
}

fn bench_haar(c: &mut Criterion) {
    let mut group = c.benchmark_group("haar_forward");
    for depth in [8u32, 10] {
        let space = TorusSpace::uniform(2, depth, 0.5, 1).unwrap();
        let f = function(&space);
        let grid = sample_grid(&space, 1);
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, depth), &depth, |b, _| {
                b.iter(|| run(&pool, || black_box(haar_forward(&f, &grid).unwrap())))
            });
        }
    }
    group.finish();
}

fn bench_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("operator_apply");
    let space = TorusSpace::uniform(3, 6, 0.5, 1).unwrap();
    let op = OperatorHandle::build(&space, vec![KernelDesc::PeriodicHilbert; 3], &QuadratureConfig::default()).unwrap();
    let f = function(&space);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| run(&pool, || black_box(op.apply(&f).unwrap()))));
    }
    group.finish();
}

fn bench_shift(c: &mut Criterion) {
    let mut group = c.benchmark_group("shift_apply");
    let space = TorusSpace::uniform(2, 8, 0.5, 1).unwrap();
    let complexity = vec![(1, 2); 2];
    let grid = sample_grid(&space, 2);
    let provider = saturated_random_provider(&space, &complexity, 3);
    let spec = ShiftSpec::cancellative(&space, &grid, complexity, provider).unwrap();
    let f = function(&space);
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| run(&pool, || black_box(shift_apply(&spec, &f).unwrap()))));
    }
    group.finish();
}

fn bench_mc(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc_reconstruct");
    group.sample_size(10);
    let space = TorusSpace::uniform(2, 5, 0.5, 2).unwrap();
    let op = OperatorHandle::build(&space, vec![KernelDesc::PeriodicHilbert; 2], &QuadratureConfig::default()).unwrap();
    let f = function(&space);
    let opts = McOptions {
        samples: 16,
        seed: 1,
        convention: SmConvention::SmallerCube,
        buckets: false,
    };
    for (name, pool) in pools() {
        group.bench_function(name, |b| b.iter(|| run(&pool, || black_box(mc_reconstruct(&op, &f, &f, opts).unwrap()))));
    }
    group.finish();
}

criterion_group!(benches, bench_haar, bench_apply, bench_shift, bench_mc);
criterion_main!(benches);
