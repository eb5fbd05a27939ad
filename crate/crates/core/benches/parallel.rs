//! One rayon worker versus the default pool on the data-parallel kernels.
//!
//! Build with `--no-default-features` to time the plain sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use mfpmp::meanfield::{build_generated, lipschitz_estimate};
use mfpmp::measures::w1_sinkhorn;
use mfpmp::pmp::{self, SweepOptions};
use mfpmp::problems::{build, Params};
use mfpmp::simulate::integrate_forward;
use mfpmp::{ControlGrid, ProblemSpec, TimeGrid};

fn alignment() -> ProblemSpec {
    build("alignment", &Params::new()).unwrap().spec().clone()
}

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    vec![
        ("one_thread", ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("default_pool", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn forward(c: &mut Criterion) {
    let p = alignment();
    let grid = TimeGrid::new(20, 1.0).unwrap();
    let mut group = c.benchmark_group("forward_alignment");
    for n in [64usize, 256] {
        let x0 = p.sample_initial(n, 1);
        let u = ControlGrid::constant(&vec![0.3; n * 2], 2, 20);
        for (name, pool) in pools() {
            group.bench_with_input(BenchmarkId::new(name, n), &n, |b, _| {
                pool.install(|| b.iter(|| integrate_forward(&p, &u, &x0, &grid).unwrap()))
            });
        }
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let p = alignment();
    let grid = TimeGrid::new(10, 1.0).unwrap();
    let x0 = p.sample_initial(128, 2);
    let opts = SweepOptions {
        max_iter: 5,
        ..SweepOptions::default()
    };
    let mut group = c.benchmark_group("sweep_alignment_128");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(name, |b| {
            pool.install(|| b.iter(|| pmp::forward_backward_sweep(&p, &x0, &grid, &opts).unwrap()))
        });
    }
    group.finish();
}

fn distances(c: &mut Criterion) {
    let m = build("model_case", &Params::new()).unwrap().spec().clone();
    let grid = TimeGrid::new(10, 1.0).unwrap();
    let solved = |n: usize| {
        let out = pmp::forward_backward_sweep(&m, &m.sample_initial(n, 0), &grid, &SweepOptions::default()).unwrap();
        build_generated(&out.trajectory, &out.costate, &out.controls).unwrap()
    };
    let (coarse, fine) = (solved(64), solved(128));
    let mut group = c.benchmark_group("distances");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("lipschitz_128", name), |b| {
            pool.install(|| b.iter(|| lipschitz_estimate(&fine).unwrap()))
        });
        group.bench_function(BenchmarkId::new("sinkhorn_64_128", name), |b| {
            pool.install(|| b.iter(|| w1_sinkhorn(coarse.nu(5), fine.nu(5), 1e-3).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, forward, sweep, distances);
criterion_main!(benches);
