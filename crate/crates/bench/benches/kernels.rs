use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mvhom::expr::Program;
use mvhom::homogenize::periodic_theta;
use mvhom::reference;
use mvhom::sde::simulate_slow_fast;
use mvhom::{parse, EmpiricalMeasure, FrozenSolver, Grid1D, HomogenizedField, InitialLaw, SimConfig};

fn expressions(c: &mut Criterion) {
    let e = parse("4*log(1 + (x^2 - 1)^2/16) + 0.1*(cos(2*pi*y) + sin(2*pi*y))").unwrap();
    let p = Program::new(&e);
    c.bench_function("expr_tree_eval", |b| {
        b.iter(|| e.eval(black_box(&[0.3]), black_box(&[0.7]), None).unwrap())
    });
    c.bench_function("expr_program_eval", |b| {
        b.iter(|| p.eval(black_box(&[0.3]), black_box(&[0.7]), &[]).unwrap())
    });
}

fn frozen(c: &mut Criterion) {
    let m = reference::ou();
    let s = FrozenSolver::new(&m).unwrap();
    let grid = Grid1D::new(-8.0, 8.0, 4001).unwrap();
    c.bench_function("frozen_solve_ou_4001", |b| b.iter(|| s.solve(black_box(0.3), &grid).unwrap()));
    let q = reference::rough_q();
    c.bench_function("periodic_theta", |b| {
        b.iter(|| periodic_theta(std::slice::from_ref(&q), black_box(0.5)).unwrap())
    });
}

fn fields(c: &mut Criterion) {
    let m = reference::dissipative_aggdiff().unwrap();
    let field = HomogenizedField::quadrature(&m, None, 1.0 / 128.0).unwrap();
    let mu = EmpiricalMeasure::from_points_1d(&[-0.5, 0.1, 0.8]).unwrap();
    field.eval(0.0, &mu).unwrap();
    c.bench_function("quadrature_field_eval_cached", |b| {
        b.iter(|| field.eval(black_box(0.003), &mu).unwrap())
    });
}

fn particles(c: &mut Criterion) {
    let m = reference::rate_reference().unwrap();
    let cfg = SimConfig {
        epsilon: 0.4,
        n: 1000,
        mc_reps: 1,
        dt_slow_request: 0.01,
        t_end: 0.1,
        record_stride: 10,
        ..SimConfig::default()
    };
    let mut g = c.benchmark_group("slow_fast");
    g.sample_size(10);
    g.bench_function("rough_n1000_t0.1", |b| {
        b.iter(|| simulate_slow_fast(&m, &cfg, &InitialLaw::Point(0.5), &InitialLaw::Point(0.0)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, expressions, frozen, fields, particles);
criterion_main!(benches);
