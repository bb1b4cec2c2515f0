use std::sync::Arc;

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use dampde::fem::{assemble_load_serial, assemble_load_with_rule, FeContext};
use dampde::forward::{ModelParams, SolverSettings, SpaceTimeData, SpaceTimeSolver};
use dampde::harness::ManufacturedCase;
use dampde::mesh::SpaceKind;
use dampde::par;
use dampde::quadrature::TriangleRule;
use dampde::time::TimeGrid;

fn matvec(c: &mut Criterion) {
    let mut group = c.benchmark_group("stiffness_matvec");
    for n in [64, 256] {
        let ctx = FeContext::new(n).unwrap();
        let a = &ctx.stiff_v;
        let x: Vec<f64> = (0..a.ncols()).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut y = vec![0.0; a.nrows()];
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| a.mul_vec_into(black_box(&x), &mut y))
        });
        group.bench_with_input(BenchmarkId::new("serial", n), &n, |b, _| {
            b.iter(|| a.mul_vec_into_serial(black_box(&x), &mut y))
        });
    }
    group.finish();
}

fn load_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("load_assembly");
    let rule = TriangleRule::degree5();
    let f = |x: f64, y: f64| (x * y).exp() * (3.0 * x).sin();
    for n in [64, 256] {
        let ctx = FeContext::new(n).unwrap();
        let space = ctx.space(SpaceKind::FreeP1);
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| assemble_load_with_rule(ctx.mesh(), space, &rule, f).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("serial", n), &n, |b, _| {
            b.iter(|| assemble_load_serial(ctx.mesh(), space, &rule, f).unwrap())
        });
    }
    group.finish();
}

fn reduction(c: &mut Criterion) {
    let mut group = c.benchmark_group("reduction");
    let len = 1 << 20;
    let v: Vec<f64> = (0..len).map(|i| (i as f64).sqrt()).collect();
    group.bench_function("parallel", |b| {
        b.iter(|| par::sum_indexed(len, |i| v[i] * v[i]))
    });
    group.bench_function("serial", |b| {
        b.iter(|| par::sum_indexed_serial(len, |i| v[i] * v[i]))
    });
    group.finish();
}

fn state_solve(c: &mut Criterion) {
    let params = ModelParams::default();
    let case = ManufacturedCase { params };
    let ctx = Arc::new(FeContext::new(64).unwrap());
    let grid = TimeGrid::uniform(params.final_time, 16).unwrap();
    let solver = SpaceTimeSolver::new(ctx, params, grid, SolverSettings::default()).unwrap();
    let l = SpaceTimeData::Function(case.source_l());
    let d0 = case.exact_d();
    c.bench_function("state_solve_n64_m16", |b| {
        b.iter(|| solver.solve_state(&l, &d0, &SpaceTimeData::Zero).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = matvec, load_assembly, reduction, state_solve
}
criterion_main!(benches);
