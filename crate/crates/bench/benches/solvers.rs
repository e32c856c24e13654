use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use measure_heat_bench::{interval, square};
use measure_heat_core::duality::duality_residual_with;
use measure_heat_core::solvers::{solve_parabolic_with, solve_retrograde_with, TrajectoryOptions};
use measure_heat_core::{assemble_stiffness, discretize_measure, NodalField, PairingConvention, TimeGrid};

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_stiffness");
    for n in [32, 64, 128] {
        let (ops, _) = square(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| assemble_stiffness(ops.mesh(), ops.coefficient()).unwrap())
        });
    }
    group.finish();
}

fn elliptic(c: &mut Criterion) {
    let mut group = c.benchmark_group("elliptic_solve");
    for n in [256, 4096] {
        let (ops, mu) = interval(n);
        let load = discretize_measure(ops.mesh(), &mu).unwrap();
        let solver = ops.elliptic_solver().unwrap();
        group.bench_with_input(BenchmarkId::new("banded_1d", n), &n, |b, _| {
            b.iter(|| solver.solve(black_box(load.values()), None).unwrap())
        });
    }
    for n in [32, 64] {
        let (ops, mu) = square(n);
        let load = discretize_measure(ops.mesh(), &mu).unwrap();
        let solver = ops.elliptic_solver().unwrap();
        group.bench_with_input(BenchmarkId::new("krylov_2d", n), &n, |b, _| {
            b.iter(|| solver.solve(black_box(load.values()), None).unwrap())
        });
    }
    group.finish();
}

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("parabolic_march");
    group.sample_size(20);
    let (ops, mu) = square(32);
    let load = discretize_measure(ops.mesh(), &mu).unwrap();
    let u0 = NodalField::zeros(ops.mesh().clone());
    let grid = TimeGrid::new(1e-3, 50).unwrap();
    let opts = TrajectoryOptions::default();
    group.bench_function("square_32_x50", |b| b.iter(|| solve_parabolic_with(&ops, &load, &u0, grid, &opts).unwrap()));
    group.finish();
}

fn pairing(c: &mut Criterion) {
    let (ops, mu) = interval(128);
    let mesh = ops.mesh().clone();
    let grid = TimeGrid::new(1e-3, 100).unwrap();
    let full = TrajectoryOptions { stride: Some(1), reference: None };
    let load = discretize_measure(&mesh, &mu).unwrap();
    let u0 = NodalField::from_fn(mesh.clone(), |p| (std::f64::consts::PI * p[0]).sin()).unwrap();
    let g: Vec<NodalField> = (0..grid.n_steps()).map(|_| NodalField::constant(mesh.clone(), 1.0)).collect();
    let u = solve_parabolic_with(&ops, &load, &u0, grid, &full).unwrap();
    let w = solve_retrograde_with(&ops.adjoint().unwrap(), &g, grid, &full).unwrap();
    c.bench_function("duality_residual_1d_128", |b| {
        b.iter(|| duality_residual_with(&u, &w, &u0, &g, &mu, &mesh, PairingConvention::Adjoint).unwrap())
    });
}

criterion_group!(benches, assembly, elliptic, stepping, pairing);
criterion_main!(benches);
