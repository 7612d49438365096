use covsteer_bench::{cartpole, lti};
use covsteer_core::examples::random_problem;
use covsteer_core::*;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use std::hint::black_box;

fn lambda_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_lambda");
    for (name, (system, bc)) in [("lti", lti()), ("cartpole", cartpole())] {
        let ops = stack_operators(&system);
        group.bench_function(name, |b| {
            b.iter(|| solve_lambda(&system, &ops, &bc, &SolverOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let (system, bc) = cartpole();
    let mut group = c.benchmark_group("cartpole");
    group.sample_size(10);
    group.bench_function("stack_operators", |b| b.iter(|| stack_operators(black_box(&system))));
    let ops = stack_operators(&system);
    let lm = solve_lambda(&system, &ops, &bc, &SolverOptions::default()).unwrap();
    group.bench_function("build_policy", |b| {
        b.iter_batched(
            || lm.clone(),
            |lm| build_policy(&system, &ops, &bc, lm).unwrap(),
            BatchSize::SmallInput,
        )
    });
    let policy = build_policy(&system, &ops, &bc, lm.clone()).unwrap();
    group.bench_function("propagate_moments", |b| {
        b.iter(|| propagate_moments(&system, &policy, &bc).unwrap())
    });
    group.bench_function("riccati_backward", |b| {
        b.iter(|| riccati_backward(&system, &lm.lambda).unwrap())
    });
    group.finish();
}

fn diffusionless(c: &mut Criterion) {
    let (system, bc) = random_problem(1, 3, 2, 0, 20);
    let ops = stack_operators(&system);
    let mut group = c.benchmark_group("diffusionless");
    group.bench_function("svd", |b| {
        b.iter(|| steer_cov_svd(&ops, &bc.sigma0, &bc.sigma_f).unwrap())
    });
    group.bench_function("riccati", |b| {
        b.iter(|| steer_cov_riccati(&ops, &bc.sigma0, &bc.sigma_f, &SolverOptions::default()).unwrap())
    });
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let (system, bc) = lti();
    let ops = stack_operators(&system);
    let lm = solve_lambda(&system, &ops, &bc, &SolverOptions::default()).unwrap();
    let policy = build_policy(&system, &ops, &bc, lm).unwrap();
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    group.bench_function("lti_2000_runs", |b| {
        b.iter(|| monte_carlo(&system, &policy, &bc, &MonteCarloOptions::new(2000, 7)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, lambda_solve, pipeline, diffusionless, ensemble);
criterion_main!(benches);
