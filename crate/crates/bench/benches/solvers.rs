use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lipcon::lmi::{self, LmiProblem};
use lipcon::{numkit, repro, sim, GraphSpectra};
use lipcon_bench::{manipulator_scenario, symmetric};
use std::hint::black_box;

fn eigen(c: &mut Criterion) {
    let mut g = c.benchmark_group("sym_eig");
    for n in [4, 8, 24, 64] {
        let m = symmetric(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| numkit::sym_eig(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn graph(c: &mut Criterion) {
    let g = repro::manipulator_graph();
    c.bench_function("graph_spectra_manipulator", |b| {
        b.iter(|| GraphSpectra::compute(black_box(&g)).unwrap())
    });
}

fn lmi_solve(c: &mut Criterion) {
    let model = repro::manipulator_model();
    let mut g = c.benchmark_group("lmi_solve");
    g.sample_size(10);
    g.bench_function("consensus", |b| {
        b.iter(|| lmi::solve(&LmiProblem::consensus(black_box(&model))).unwrap())
    });
    g.bench_function("hinf_gamma2", |b| {
        b.iter(|| lmi::solve(&LmiProblem::hinf(black_box(&model), repro::GAMMA)).unwrap())
    });
    g.finish();
}

fn integrate(c: &mut Criterion) {
    let scenario = manipulator_scenario(1.0, 1e-3);
    let mut g = c.benchmark_group("integrate");
    g.sample_size(20);
    g.bench_function("manipulator_1s_dt1e-3", |b| {
        b.iter(|| sim::integrate(black_box(&scenario)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, eigen, graph, lmi_solve, integrate);
criterion_main!(benches);
