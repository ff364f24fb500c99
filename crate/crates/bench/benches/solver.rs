use biofilm_bench::{ab_problem, diffusion_system};
use biofilm_core::cases::example1;
use biofilm_core::fit::objective;
use biofilm_core::forward::solve_forward;
use biofilm_core::tridiag::solve_tridiagonal;
use biofilm_core::Grid;
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn tridiagonal(c: &mut Criterion) {
    let mut g = c.benchmark_group("tridiagonal");
    for m in [99, 999] {
        let sys = diffusion_system(m);
        g.bench_with_input(BenchmarkId::from_parameter(m), &sys, |b, s| b.iter(|| solve_tridiagonal(black_box(s))));
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let case = example1();
    let mut g = c.benchmark_group("forward");
    for h in [0.05, 0.01] {
        let grid = Grid::uniform(h, case.t_final).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(h), &grid, |b, grid| {
            b.iter(|| solve_forward(&case.data, &case.params, black_box(grid)))
        });
    }
    g.finish();
}

fn flux_objective(c: &mut Criterion) {
    let prob = ab_problem(0.01);
    let x = *prob.base();
    c.bench_function("objective/0.01", |b| b.iter(|| objective(black_box(&x), &prob)));
}

criterion_group!(benches, tridiagonal, forward, flux_objective);
criterion_main!(benches);
