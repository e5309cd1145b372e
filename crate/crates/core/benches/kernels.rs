//! Parallel vs single-threaded timings for the heavy kernels.
//!
//! With the default `parallel` feature the "sequential" rows run inside a
//! one-thread rayon pool; build with `--no-default-features` for the plain
//! iterator path.

use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dwlab_core::adops::majorant;
use dwlab_core::dyadic::Truncation;
use dwlab_core::reducing::{build_family, Backend};
use dwlab_core::seqspace::{random_sequence, seq_norm, Family, Mode, ScaleLaw, SpaceParams};
use dwlab_core::transforms::{dwt_analyze, Filter, GridSpec};
use dwlab_core::weights::{MatrixWeight, PowerGrid, QuadratureSpec};

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn kernels(c: &mut Criterion) {
    let t = Truncation::new(1, 0, 8, 2).unwrap();
    let quad = QuadratureSpec::new(8).unwrap();
    let w = MatrixWeight::diag_power(1, &[-0.5, 0.25], None).unwrap();
    let tv = random_sequence(&t, 2, 7, 0.3, ScaleLaw { sigma: 0.0 }, false).unwrap();
    let grid = Arc::new(PowerGrid::new(&w, 1.5, &t, quad).unwrap());
    let space = SpaceParams::new(Family::F, 0.3, 1.5, 0.75).with_mode(Mode::Matrix(grid));
    let field = GridSpec::Noise { n: 2, size: 256, seed: 3, m: 1, band_limited: false }.build().unwrap();
    let small = Truncation::new(1, 0, 5, 2).unwrap();

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (label, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("f_norm_matrix", label), &pool, |b, p| {
            b.iter(|| p.install(|| black_box(seq_norm(&tv, &space, &t).unwrap())))
        });
        g.bench_with_input(BenchmarkId::new("power_grid", label), &pool, |b, p| {
            b.iter(|| p.install(|| black_box(PowerGrid::new(&w, 1.5, &t, quad).unwrap())))
        });
        g.bench_with_input(BenchmarkId::new("mvee_family", label), &pool, |b, p| {
            b.iter(|| p.install(|| black_box(build_family(&w, 1.0, &small, quad, Backend::Mvee).unwrap())))
        });
        g.bench_with_input(BenchmarkId::new("majorant", label), &pool, |b, p| {
            b.iter(|| p.install(|| black_box(majorant(&tv, 1.0, 3.0, &t).unwrap())))
        });
        g.bench_with_input(BenchmarkId::new("dwt_2d", label), &pool, |b, p| {
            b.iter(|| p.install(|| black_box(dwt_analyze(&field, Filter::new(4).unwrap(), 4).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
