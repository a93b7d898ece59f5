//! Parallel vs sequential dispatch of the independent solves: the three cell
//! problems inside one homogenization, and the stages of a small sweep.
//!
//! With the default `parallel` feature both modes are measured; building with
//! `--no-default-features` makes the two coincide (rayon falls back to the
//! calling thread), which is visible directly in the report.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hall_homog::cell::{homogenize_both, PhasePair, SolveOpts};
use hall_homog::geometry::{circular_schedule, rasterize, CellGeometry, RhoField};
use hall_homog::par::Parallelism;
use hall_homog::sweep::{run_sweep, ResolutionPolicy, SweepOpts};
use hall_homog::tensor::Vec3;

fn bench_homogenize(c: &mut Criterion) {
    let field = rasterize(&CellGeometry::disk(0.25).unwrap(), 96).unwrap();
    let phases = PhasePair::new(1.0, 0.5, 40.0, 15.0).unwrap();
    let h = Vec3::new(1.0, 1.0, 1.0);
    let mut group = c.benchmark_group("homogenize_both_n96");
    group.sample_size(10);
    for mode in [Parallelism::Sequential, Parallelism::Rayon] {
        let opts = SolveOpts {
            parallelism: mode,
            ..SolveOpts::default()
        };
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &opts,
            |b, opts| b.iter(|| homogenize_both(&field, &phases, h, opts).unwrap()),
        );
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let schedule = circular_schedule(&[0.2, 0.1, 0.05], 1.0, 0.5, 2.0, 1.0).unwrap();
    let rho = RhoField::constant(1.0).unwrap();
    let h = Vec3::new(1.0, 1.0, 1.0);
    let mut group = c.benchmark_group("sweep_three_stages");
    group.sample_size(10);
    for mode in [Parallelism::Sequential, Parallelism::Rayon] {
        let opts = SweepOpts {
            solver: SolveOpts {
                parallelism: mode,
                ..SolveOpts::default()
            },
            policy: ResolutionPolicy::default(),
            compute_pw: false,
        };
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{mode:?}")),
            &opts,
            |b, opts| b.iter(|| run_sweep(&schedule, &rho, h, None, opts).unwrap()),
        );
    }
    group.finish();
}

criterion_group!(benches, bench_homogenize, bench_sweep);
criterion_main!(benches);
