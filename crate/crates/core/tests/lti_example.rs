mod common;

use common::{lti_variant, reference_lambda};
use covsteer_core::examples::lti_example;
use covsteer_core::*;

fn max_entry_gap(a: &Mat, b: &Mat) -> f64 {
    (a - b).amax()
}

#[test]
fn stated_example_is_valid_controllable_and_feasible() {
    let (sys, bc) = lti_example();
    assert!(validate(&sys, &bc).is_valid());
    assert!(controllability_check(&stack_operators(&sys)).controllable);
    assert!(feasibility_check(&sys, &bc));
    let last = &sys.g[100];
    let reduced = &bc.sigma_f - last * last.transpose();
    assert!((reduced[(1, 1)] - (2.0 - 0.0009)).abs() < 1e-15);
}

#[test]
fn stated_example_multiplier_is_second_order_root() {
    let (sys, bc) = lti_example();
    let ops = stack_operators(&sys);
    let lm = solve_lambda(&sys, &ops, &bc, &SolverOptions::default()).unwrap();
    assert!(lm.residual_norm <= 1e-10);
    assert!(lm.second_order_ok);
    // independent check: LQG with this terminal weight lands on SigmaF
    let lqg = riccati_backward(&sys, &lm.lambda).unwrap();
    let terminal = lqg.terminal_covariance(&sys, &bc.sigma0);
    assert!((terminal - &bc.sigma_f).norm() <= 1e-8 * bc.sigma_f.norm());
}

#[test]
fn reference_multiplier_does_not_solve_stated_example() {
    let (sys, bc) = lti_example();
    let ops = stack_operators(&sys);
    let f = lambda_residual(&reference_lambda(), &ops, &bc.sigma0, &bc.sigma_f, &sys.g).unwrap();
    assert!(f.norm() > 0.5 * bc.sigma_f.norm());
}

// G = (0, 0.1) over 100 transitions reproduces the reference multiplier.
#[test]
fn reference_multiplier_reproduced_with_larger_noise() {
    let (sys, bc) = lti_variant(0.1, 100);
    let ops = stack_operators(&sys);
    let lm = solve_lambda(&sys, &ops, &bc, &SolverOptions::default()).unwrap();
    assert!(max_entry_gap(&lm.lambda, &reference_lambda()) <= 5e-3, "{}", lm.lambda);
    assert!(lm.second_order_ok);
}

#[test]
fn reference_multiplier_residual_in_reproducing_configuration() {
    let (sys, bc) = lti_variant(0.1, 100);
    let ops = stack_operators(&sys);
    let f = lambda_residual(&reference_lambda(), &ops, &bc.sigma0, &bc.sigma_f, &sys.g).unwrap();
    assert!(f.norm() <= 5e-3 * bc.sigma_f.norm(), "{}", f.norm());
}

#[test]
fn reference_multiplier_as_lqg_weight_in_reproducing_configuration() {
    let (sys, bc) = lti_variant(0.1, 100);
    let lqg = riccati_backward(&sys, &reference_lambda()).unwrap();
    let terminal = lqg.terminal_covariance(&sys, &bc.sigma0);
    assert!(max_entry_gap(&terminal, &bc.sigma_f) <= 5e-3, "{terminal}");
}

#[test]
fn mean_plan_matches_least_squares() {
    let (sys, bc) = lti_example();
    let ops = stack_operators(&sys);
    let plan = steer_mean(&ops, &bc).unwrap();
    let bbar = ops.bbar();
    let rhs = &bc.mu_f - ops.abar() * &bc.mu0;
    let svd = bbar.clone().svd(true, true);
    let reference = svd.solve(&rhs, 1e-14 * svd.singular_values.max()).unwrap();
    assert!((plan.stacked() - &reference).norm() <= 1e-9 * reference.norm());
}

#[test]
fn policy_terminal_moments_and_lqg_equivalence() {
    let (sys, bc) = lti_example();
    let ops = stack_operators(&sys);
    let lm = solve_lambda(&sys, &ops, &bc, &SolverOptions::default()).unwrap();
    let lambda = lm.lambda.clone();
    let policy = build_policy(&sys, &ops, &bc, lm).unwrap();
    let traj = propagate_moments(&sys, &policy, &bc).unwrap();
    assert!((traj.terminal_mean() - &bc.mu_f).norm() <= 1e-8);
    assert!((traj.terminal_covariance() - &bc.sigma_f).norm() <= 1e-8 * bc.sigma_f.norm());

    let lqg = riccati_backward(&sys, &lambda).unwrap();
    let lqg_policy = LqgPolicy::new(&sys, &bc, policy.mean_plan.clone(), &lqg);
    let report = equivalence_check(&sys, &bc, &policy, &lqg_policy, 100, 77);
    assert!(report.passes(1e-8), "{report:?}");

    let lqg_traj = propagate_moments(&sys, &lqg_policy, &bc).unwrap();
    let (a, b) = (traj.cost(), lqg_traj.cost());
    assert!((a.j_total - b.j_total).abs() <= 1e-6 * a.j_total);
    assert!((a.j_mu - b.j_mu).abs() <= 1e-6 * a.j_mu);
}

#[test]
fn zero_multiplier_policies_coincide() {
    let (sys, bc) = lti_example();
    let ops = stack_operators(&sys);
    let lm = given_lambda(&sys, &ops, &bc, &Mat::zeros(2, 2)).unwrap();
    let policy = build_policy(&sys, &ops, &bc, lm).unwrap();
    let lqg = riccati_backward(&sys, &Mat::zeros(2, 2)).unwrap();
    let lqg_policy = LqgPolicy::new(&sys, &bc, policy.mean_plan.clone(), &lqg);
    let report = equivalence_check(&sys, &bc, &policy, &lqg_policy, 10, 3);
    assert_eq!(report.max_deviation, 0.0);
}

#[test]
fn monte_carlo_terminal_covariance() {
    let (sys, bc) = lti_example();
    let ops = stack_operators(&sys);
    let lm = solve_lambda(&sys, &ops, &bc, &SolverOptions::default()).unwrap();
    let policy = build_policy(&sys, &ops, &bc, lm).unwrap();
    let traj = propagate_moments(&sys, &policy, &bc).unwrap();
    let ens = monte_carlo(&sys, &policy, &bc, &MonteCarloOptions::new(20_000, 2018)).unwrap();
    let rel = (ens.terminal_covariance() - &bc.sigma_f).norm() / bc.sigma_f.norm();
    assert!(rel <= 0.05, "{rel}");
    let expected = traj.j_mu + traj.j_sigma;
    assert!((ens.sample_cost_mean - expected).abs() <= 3.0 * ens.sample_cost_stderr);
    assert!((ens.cost.j_total - ens.sample_cost_mean).abs() <= 1e-9 * expected);
}
