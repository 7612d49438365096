mod common;

use common::stacked_closed_form;
use covsteer_core::examples::random_problem;
use covsteer_core::*;
use proptest::prelude::*;

fn sizes() -> impl Strategy<Value = (u64, usize, usize, usize, usize)> {
    (any::<u64>(), 1usize..=4, 1usize..=3, 0usize..=2, 2usize..=8)
        .prop_filter("controllable size", |&(_, n, m, _, h)| m * (h + 1) >= n)
}

fn vector(len: usize, values: &[f64]) -> Vector {
    Vector::from_iterator(len, values.iter().copied().cycle().take(len))
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn permute_columns(m: &Mat) -> Mat {
    let mut out = m.clone();
    let c = m.ncols();
    for j in 0..c {
        out.set_column(j, &m.column(c - 1 - j));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stacked_dynamics_match_step_recursion(
        (seed, n, m, r, h) in sizes(),
        values in prop::collection::vec(-1.0f64..1.0, 8),
    ) {
        let (sys, _) = random_problem(seed, n, m, r, h);
        let x0 = vector(n, &values);
        let u: Vec<Vector> = (0..sys.steps()).map(|k| vector(m, &values[k % 3..])).collect();
        let w: Vec<Vector> = (0..sys.steps()).map(|k| vector(r, &values[(k + 1) % 5..])).collect();
        let mut x = x0.clone();
        for k in 0..sys.steps() {
            x = sys.step(k, &x, &u[k], &w[k]);
        }
        let closed = stacked_closed_form(&sys, &x0, &u, &w);
        prop_assert!((&x - &closed).norm() <= 1e-12 * closed.norm().max(1.0) * 10.0);

        let ops = stack_operators(&sys);
        let mut stacked = ops.abar() * &x0;
        for k in 0..sys.steps() {
            stacked += ops.input_block(k) * &u[k] + ops.noise_block(k) * &w[k];
        }
        prop_assert!((&stacked - &closed).norm() <= 1e-12 * closed.norm().max(1.0) * 10.0);
    }

    #[test]
    fn gramian_recursion_matches_direct_product((seed, n, m, r, h) in sizes()) {
        let (sys, _) = random_problem(seed, n, m, r, h);
        let ops = stack_operators(&sys);
        for k in 0..=sys.steps() {
            let direct = if k == sys.steps() {
                Mat::zeros(n, n)
            } else {
                let tail = ops.bbar_tail(k);
                &tail * tail.transpose()
            };
            prop_assert!(rel(ops.gramian(k), &direct) <= 1e-12);
            prop_assert_eq!(ops.gramian(k), &ops.gramian(k).transpose());
        }
    }

    #[test]
    fn controllability_ignores_input_ordering((seed, n, _m, r, h) in sizes()) {
        let (mut sys, _) = random_problem(seed, n, 2, r, h.max(n));
        let before = controllability_check(&stack_operators(&sys));
        for b in sys.b.iter_mut() {
            *b = permute_columns(b);
        }
        let after = controllability_check(&stack_operators(&sys));
        prop_assert_eq!(before.controllable, after.controllable);
        prop_assert!((before.eigen_ratio - after.eigen_ratio).abs() <= 1e-10 * before.eigen_ratio.max(1e-300) + 1e-14);
    }

    #[test]
    fn mean_plan_is_minimum_norm(
        (seed, n, m, r, h) in sizes(),
        direction in prop::collection::vec(-1.0f64..1.0, 30),
    ) {
        let (sys, bc) = random_problem(seed, n, m, r, h);
        let ops = stack_operators(&sys);
        let plan = steer_mean(&ops, &bc).unwrap();
        let u = plan.stacked();
        let bbar = ops.bbar();
        let reached = ops.abar() * &bc.mu0 + &bbar * &u;
        prop_assert!((&reached - &bc.mu_f).norm() <= 1e-9 * bc.mu_f.norm().max(1.0));

        // any null-space perturbation still reaches muF and costs more
        let d = vector(u.len(), &direction);
        let theta = ops.gramian(0).clone().cholesky().unwrap().inverse();
        let null = &d - bbar.transpose() * (&theta * (&bbar * &d));
        prop_assert!((&bbar * &null).norm() <= 1e-9 * d.norm().max(1.0));
        let other = &u + &null;
        prop_assert!(other.norm_squared() >= u.norm_squared() - 1e-9 * u.norm_squared().max(1.0));
        prop_assert!((plan.j_mu - u.norm_squared()).abs() <= 1e-9 * plan.j_mu.max(1.0));
    }

    #[test]
    fn mean_plan_is_linear_in_the_offset(
        (seed, n, m, r, h) in sizes(),
        alpha in -2.0f64..2.0,
        shift in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let (sys, bc) = random_problem(seed, n, m, r, h);
        let ops = stack_operators(&sys);
        let base = steer_mean(&ops, &bc).unwrap().stacked();
        let delta = vector(n, &shift);
        let mut moved = bc.clone();
        moved.mu_f = &bc.mu_f + &delta * alpha;
        let combined = steer_mean(&ops, &moved).unwrap().stacked();
        let mut only = bc.clone();
        only.mu0 = Vector::zeros(n);
        only.mu_f = delta * alpha;
        let part = steer_mean(&ops, &only).unwrap().stacked();
        prop_assert!((&combined - (&base + &part)).norm() <= 1e-9 * combined.norm().max(1.0));
    }

    #[test]
    fn diffusionless_gain_hits_target_exactly((seed, n, m, _r, h) in sizes()) {
        let (sys, bc) = random_problem(seed, n, m, 0, h);
        let ops = stack_operators(&sys);
        let g = steer_cov_svd(&ops, &bc.sigma0, &bc.sigma_f).unwrap();
        let terminal = &g.closed_loop * &bc.sigma0 * g.closed_loop.transpose();
        prop_assert!(rel(&terminal, &bc.sigma_f) <= 1e-9);
        let identity = g.trace_identity_cost(ops.abar(), &bc.sigma0, &bc.sigma_f).unwrap();
        prop_assert!((identity - g.j_sigma).abs() <= 1e-8 * g.j_sigma.max(1.0));
    }

    #[test]
    fn svd_factors_are_consistent((seed, n, m, _r, h) in sizes()) {
        let (sys, bc) = random_problem(seed, n, m, 0, h);
        let ops = stack_operators(&sys);
        let g = steer_cov_svd(&ops, &bc.sigma0, &bc.sigma_f).unwrap();
        let f = g.factors.as_ref().unwrap();
        let eye = Mat::identity(n, n);
        prop_assert!((f.rstar.transpose() * &f.rstar - &eye).norm() <= 1e-12);
        prop_assert!(rel(&(&f.v0 * Mat::from_diagonal(&f.s0) * f.v0.transpose()), &bc.sigma0) <= 1e-12);
        prop_assert!(rel(&(&f.vf * Mat::from_diagonal(&f.sf) * f.vf.transpose()), &bc.sigma_f) <= 1e-12);
        prop_assert!(rel(&(&f.u_omega * Mat::from_diagonal(&f.s_omega) * f.v_omega.transpose()), &f.omega) <= 1e-12);
        prop_assert!(f.s_omega.iter().all(|s| *s >= 0.0));
    }

    #[test]
    fn svd_and_multiplier_routes_agree((seed, n, m, _r, h) in sizes()) {
        let (sys, bc) = random_problem(seed, n, m, 0, h);
        let ops = stack_operators(&sys);
        let svd = steer_cov_svd(&ops, &bc.sigma0, &bc.sigma_f).unwrap();
        let (riccati, lm) = steer_cov_riccati(&ops, &bc.sigma0, &bc.sigma_f, &SolverOptions::default()).unwrap();
        prop_assert!(rel(&riccati.closed_loop, &svd.closed_loop) <= 1e-8);
        prop_assert!((riccati.j_sigma - svd.j_sigma).abs() <= 1e-8 * svd.j_sigma.max(1.0));
        if let Some(implied) = svd.implied_multiplier() {
            let res = riccati_residual(&ops, &implied, &bc.sigma0, &bc.sigma_f).unwrap();
            let scale = ops.gramian(0).clone().cholesky().unwrap().inverse().norm().powi(2) * bc.sigma_f.norm();
            prop_assert!(res.norm() <= 1e-8 * scale.max(1.0));
            prop_assert!(rel(&implied, &lm.lambda) <= 1e-6);
        }
    }

    #[test]
    fn diffusionless_cost_is_coordinate_free(
        (seed, n, m, _r, h) in sizes(),
        entries in prop::collection::vec(-0.5f64..0.5, 16),
    ) {
        let (sys, bc) = random_problem(seed, n, m, 0, h);
        let t = Mat::identity(n, n) + Mat::from_iterator(n, n, entries.iter().copied().take(n * n)) * 0.5;
        prop_assume!(t.clone().svd(false, false).singular_values.min() > 0.2);
        let t_inv = t.clone().try_inverse().unwrap();
        let a: Vec<Mat> = sys.a.iter().map(|a| &t * a * &t_inv).collect();
        let b: Vec<Mat> = sys.b.iter().map(|b| &t * b).collect();
        let g: Vec<Mat> = sys.g.clone();
        let moved = LtvSystem::new(a, b, g).unwrap();
        let base = steer_cov_svd(&stack_operators(&sys), &bc.sigma0, &bc.sigma_f).unwrap();
        let other = steer_cov_svd(
            &stack_operators(&moved),
            &(&t * &bc.sigma0 * t.transpose()),
            &(&t * &bc.sigma_f * t.transpose()),
        ).unwrap();
        prop_assert!((base.j_sigma - other.j_sigma).abs() <= 1e-7 * base.j_sigma.max(1.0));
        let mapped = &t_inv * &other.closed_loop * &t;
        prop_assert!(rel(&mapped, &base.closed_loop) <= 1e-7);
    }

    #[test]
    fn lambda_residual_is_symmetric(
        (seed, n, m, r, h) in sizes(),
        entries in prop::collection::vec(-1.0f64..1.0, 16),
        size in 0.0f64..1.0,
    ) {
        let (sys, bc) = random_problem(seed, n, m, r, h);
        let ops = stack_operators(&sys);
        let raw = Mat::from_iterator(n, n, entries.iter().copied().take(n * n));
        let lambda = (&raw + raw.transpose()) * (0.5 * size / ops.gramian(0).norm());
        let f = lambda_residual(&lambda, &ops, &bc.sigma0, &bc.sigma_f, &sys.g).unwrap();
        prop_assert_eq!(&f, &f.transpose());
    }

    #[test]
    fn riccati_costs_are_symmetric(
        (seed, n, m, r, h) in sizes(),
        entries in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let (sys, _) = random_problem(seed, n, m, r, h);
        let raw = Mat::from_iterator(n, n, entries.iter().copied().take(n * n));
        let qf = &raw * raw.transpose();
        let lqg = riccati_backward(&sys, &qf).unwrap();
        for p in &lqg.p {
            prop_assert!((p - p.transpose()).amax() <= 1e-12 * p.amax().max(1.0));
        }
    }
}
