use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hdp_bench::{maxwellian_velocities, particles_at, warmed_state};
use hdp_core::collision_landau::{bn_scatter, ScatterParams};
use hdp_core::resample::{resample_deviational_cell, ReconSettings};
use hdp_core::rng::{stream, Phase};
use hdp_core::{Method, PoissonSolver, SpatialGrid, System, Vec3};

fn scatter(c: &mut Criterion) {
    let vs = maxwellian_velocities(10_000, 1.0, 1);
    let ws = maxwellian_velocities(10_000, 1.0, 2);
    let params = ScatterParams::new(10.0, 0.01);
    c.bench_function("bn_scatter_10k_pairs", |b| {
        let mut rng = stream(3, 0, 0, Phase::Collision);
        b.iter(|| {
            let mut acc = Vec3::zeros();
            for (v, w) in vs.iter().zip(&ws) {
                let s = params.s((v - w).norm(), 1.0);
                let (a, _) = bn_scatter(v, w, s, &mut rng);
                acc += a;
            }
            black_box(acc)
        })
    });
}

fn poisson(c: &mut Criterion) {
    let grid = SpatialGrid::landau(400).unwrap();
    let solver = PoissonSolver::new(grid).unwrap();
    let rho: Vec<f64> = (0..400).map(|k| 1.0 + 0.1 * grid.center(k).sin()).collect();
    c.bench_function("poisson_400", |b| b.iter(|| solver.solve(black_box(&rho)).unwrap()));
}

fn resample(c: &mut Criterion) {
    let grid = SpatialGrid::new(1.0, 1).unwrap();
    let pos = particles_at(0.5, &maxwellian_velocities(20_000, 2.0, 4));
    let neg = particles_at(0.5, &maxwellian_velocities(20_000, 1.0, 5));
    let mut group = c.benchmark_group("resample_cell_20k_per_sign");
    group.sample_size(10);
    for k_modes in [10, 20, 30] {
        let settings = ReconSettings { k_modes, adaptive: false, box_limit: 6.0 };
        group.bench_function(format!("K{k_modes}"), |b| {
            let mut rng = stream(6, 0, 0, Phase::Resample);
            b.iter(|| {
                resample_deviational_cell(&pos, &neg, 5e-5, &settings, Vec3::zeros(), 1.0, 0, &grid, &mut rng).unwrap()
            })
        });
    }
    group.finish();
}

fn steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("step_n_x_50");
    group.sample_size(10);
    for system in [System::VpBgk, System::Vpl] {
        let state = warmed_state(system, 50, 1e-5, 5);
        group.bench_function(format!("hdp_{system:?}"), |b| {
            b.iter_batched(|| state.clone(), |mut st| st.step().unwrap(), BatchSize::LargeInput)
        });
        let mut pic = warmed_state(system, 50, 1e-4, 0);
        pic.scenario.method = Method::PicDsmc;
        let pic = hdp_core::driver::init_scenario(&pic.scenario).unwrap();
        group.bench_function(format!("pic_{system:?}"), |b| {
            b.iter_batched(|| pic.clone(), |mut st| st.step().unwrap(), BatchSize::LargeInput)
        });
    }
    group.finish();
}

criterion_group!(kernels, scatter, poisson, resample, steps);
criterion_main!(kernels);
