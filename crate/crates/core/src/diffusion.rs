//! Covariance steering with process noise.
//!
//! The response splits into `N + 1` uncorrelated pieces: the one driven by
//! `xtilde_0` and one per noise injection `G_{i-1} w_{i-1}`. Each is steered
//! as a diffusionless problem from step `i` onward, all sharing a single
//! symmetric multiplier `Lambda` fixed by the terminal covariance.

use crate::error::{Result, SteerError};
use crate::linalg::{max_eigenvalue, min_eigenvalue, Mat, Vector};
use crate::mean::{steer_mean, MeanPlan};
use crate::multiplier::{
    closed_loop, continuation, finish, newton, require_second_order, second_order_margin, LambdaEquation, LambdaMatrix,
    SolveStrategy, SolverOptions,
};
use crate::nodiffusion::steer_cov_svd;
use crate::stacked::{controllability_check, StackedOperators};
use crate::system::{BoundaryConditions, LtvSystem, EPS_PSD};

/// Smallest eigenvalue of `Sigma_F - G_N G_N'`.
pub fn feasibility_margin(system: &LtvSystem, bc: &BoundaryConditions) -> f64 {
    let last = &system.g[system.horizon];
    min_eigenvalue(&(&bc.sigma_f - last * last.transpose()))
}

/// `Sigma_F - G_N G_N'` is PSD up to the relative tolerance.
pub fn feasibility_check(system: &LtvSystem, bc: &BoundaryConditions) -> bool {
    let scale = max_eigenvalue(&bc.sigma_f).max(f64::MIN_POSITIVE);
    feasibility_margin(system, bc) >= -EPS_PSD * scale
}

/// `sum_k Phi_k C_k Phi_k' - (Sigma_F - G_N G_N')`, symmetrized.
pub fn lambda_residual(lambda: &Mat, ops: &StackedOperators, sigma0: &Mat, sigma_f: &Mat, g: &[Mat]) -> Result<Mat> {
    LambdaEquation::with_noise(ops, sigma0, g, sigma_f).residual(lambda)
}

fn scaled_equation<'a>(
    ops: &'a StackedOperators,
    sigma0: &Mat,
    g: &[Mat],
    sigma_f: &Mat,
    alpha: f64,
) -> LambdaEquation<'a> {
    let scaled: Vec<Mat> = g.iter().map(|gk| gk * alpha).collect();
    LambdaEquation::with_noise(ops, sigma0, &scaled, sigma_f)
}

/// Solve for the multiplier.
///
/// Newton starts from `Lambda = 0`. When that fails or lands on a root that
/// violates the second-order condition, the noise is scaled `G -> a G` and
/// `a` is walked from 0 to 1, starting from the closed-form diffusionless
/// multiplier. Without a closed form (singular covariances) the target
/// is blended from the open-loop terminal covariance instead, starting at
/// `Lambda = 0`.
pub fn solve_lambda(
    system: &LtvSystem,
    ops: &StackedOperators,
    bc: &BoundaryConditions,
    opts: &SolverOptions,
) -> Result<LambdaMatrix> {
    if bc.sigma_f.shape() != (ops.n, ops.n) {
        return Err(SteerError::DimensionMismatch(format!(
            "terminal covariance must be {0}x{0}",
            ops.n
        )));
    }
    if !feasibility_check(system, bc) {
        return Err(SteerError::Infeasible {
            min_eigenvalue: feasibility_margin(system, bc),
        });
    }
    let ctrl = controllability_check(ops);
    if !ctrl.controllable {
        return Err(SteerError::SingularGramian {
            ratio: ctrl.eigen_ratio,
        });
    }
    let scale = bc.sigma_f.norm();
    let n = ops.n;
    let full = LambdaEquation::with_noise(ops, &bc.sigma0, &system.g, &bc.sigma_f);
    let direct = newton(
        &full,
        &Mat::zeros(n, n),
        scale,
        opts.tolerance,
        opts.max_iterations,
        opts.jacobian,
    )
    .map(|out| finish(ops, out, SolveStrategy::Direct));
    if let Ok(lm) = &direct {
        if lm.second_order_ok {
            return direct;
        }
    }

    let start = steer_cov_svd(ops, &bc.sigma0, &bc.sigma_f)
        .ok()
        .and_then(|g| g.implied_multiplier());
    let homotopy = match start {
        Some(lambda0) => continuation(
            |a| scaled_equation(ops, &bc.sigma0, &system.g, &bc.sigma_f, a),
            &lambda0,
            scale,
            opts,
        ),
        None => Err(SteerError::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        }),
    };
    let homotopy = match homotopy {
        Ok(out) => Ok(out),
        Err(_) => {
            let open_loop = full.raw_terminal(&Mat::zeros(n, n))?;
            let target = full.target().clone();
            let weights = full.weights().to_vec();
            continuation(
                |a| LambdaEquation::new(ops, weights.clone(), &open_loop * (1.0 - a) + &target * a),
                &Mat::zeros(n, n),
                scale,
                opts,
            )
        }
    }
    .map(|out| finish(ops, out, SolveStrategy::Continuation));

    match (direct, homotopy) {
        (_, Ok(lm)) if lm.second_order_ok => Ok(lm),
        (Ok(lm), _) | (_, Ok(lm)) => {
            require_second_order(ops, &lm)?;
            Ok(lm)
        }
        (_, Err(e)) => Err(e),
    }
}

/// Check a caller-supplied multiplier and wrap it.
pub fn given_lambda(
    system: &LtvSystem,
    ops: &StackedOperators,
    bc: &BoundaryConditions,
    lambda: &Mat,
) -> Result<LambdaMatrix> {
    let f = lambda_residual(lambda, ops, &bc.sigma0, &bc.sigma_f, &system.g)?;
    let scale = bc.sigma_f.norm();
    let (margin, _) = second_order_margin(ops, lambda);
    Ok(LambdaMatrix {
        lambda: crate::linalg::symmetrize(lambda),
        residual_norm: f.norm() / if scale > 0.0 { scale } else { 1.0 },
        second_order_ok: margin > 0.0,
        second_order_margin: margin,
        iterations: 0,
        strategy: SolveStrategy::Given,
    })
}

/// Feedback policy `u_k = E[u_k] + sum_{i<=k} L^(i)_k y_i` with
/// `L^(i)_k = -B_{N,k}' Lambda Phi_i`.
#[derive(Debug, Clone)]
pub struct SteeringPolicy {
    pub mean_plan: MeanPlan,
    pub lambda: LambdaMatrix,
    pub mu0: Vector,
    /// `Phi_k`, `k = 0..=N`.
    pub phi: Vec<Mat>,
    /// `Lambda Phi_k`.
    pub lambda_phi: Vec<Mat>,
    /// `B_{N,k}`.
    pub input: Vec<Mat>,
    pub a: Vec<Mat>,
    pub b: Vec<Mat>,
}

impl SteeringPolicy {
    pub fn horizon(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn n(&self) -> usize {
        self.mu0.len()
    }

    pub fn m(&self) -> usize {
        self.b[0].ncols()
    }

    /// `L^(i)_k`, defined for `i <= k`.
    pub fn gain(&self, i: usize, k: usize) -> Option<Mat> {
        if i > k || k > self.horizon() {
            return None;
        }
        Some(-(self.input[k].transpose() * &self.lambda_phi[i]))
    }

    /// Stacked `L^(i) = [L^(i)_i; ...; L^(i)_N]`, `m(N-i+1) x n`.
    pub fn gain_stack(&self, i: usize) -> Mat {
        let m = self.m();
        let n = self.n();
        let rows = (self.horizon() + 1 - i) * m;
        let mut out = Mat::zeros(rows, n);
        for k in i..=self.horizon() {
            out.rows_mut((k - i) * m, m)
                .copy_from(&(-(self.input[k].transpose() * &self.lambda_phi[i])));
        }
        out
    }

    /// `sum_i trace(Lambda W_i Lambda Phi_i C_i Phi_i')`.
    pub fn analytic_j_sigma(&self, ops: &StackedOperators, sigma0: &Mat, g: &[Mat]) -> f64 {
        let mut total = 0.0;
        for i in 0..=self.horizon() {
            let c = if i == 0 {
                sigma0.clone()
            } else {
                &g[i - 1] * g[i - 1].transpose()
            };
            let lp = &self.lambda_phi[i];
            total += (lp.transpose() * ops.gramian(i) * lp * c).trace();
        }
        total
    }
}

pub fn build_policy(
    system: &LtvSystem,
    ops: &StackedOperators,
    bc: &BoundaryConditions,
    lambda: LambdaMatrix,
) -> Result<SteeringPolicy> {
    let mean_plan = steer_mean(ops, bc)?;
    let cl = closed_loop(ops, &lambda.lambda)?;
    let lambda_phi = cl.phi.iter().map(|p| &lambda.lambda * p).collect();
    Ok(SteeringPolicy {
        mean_plan,
        mu0: bc.mu0.clone(),
        phi: cl.phi,
        lambda_phi,
        input: (0..=ops.horizon).map(|k| ops.input_block(k).clone()).collect(),
        a: system.a.clone(),
        b: system.b.clone(),
        lambda,
    })
}

/// Per-trajectory controller memory: the next step index, the one-step
/// prediction `xhat_k` and the accumulated `z_k = sum_{i<=k} Lambda Phi_i y_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub k: usize,
    pub predicted: Vector,
    pub z: Vector,
}

impl PolicyState {
    pub fn new(policy: &SteeringPolicy) -> Self {
        Self {
            k: 0,
            predicted: policy.mu0.clone(),
            z: Vector::zeros(policy.n()),
        }
    }
}

/// Emit `u_k` for the measured `x_k` and advance the controller state.
///
/// The innovation is `y_k = x_k - xhat_k`, with `xhat_0 = mu0` and
/// `xhat_{k+1} = A_k x_k + B_k u_k`.
pub fn policy_step(
    policy: &SteeringPolicy,
    k: usize,
    x: &Vector,
    state: &PolicyState,
) -> Result<(Vector, PolicyState)> {
    let horizon = policy.horizon();
    if k != state.k || k > horizon {
        return Err(SteerError::StepOutOfRange {
            k,
            expected: state.k,
            horizon,
        });
    }
    let innovation = x - &state.predicted;
    let z = &state.z + &policy.lambda_phi[k] * innovation;
    let u = &policy.mean_plan.u_mean[k] - policy.input[k].transpose() * &z;
    let predicted = &policy.a[k] * x + &policy.b[k] * &u;
    Ok((u, PolicyState { k: k + 1, predicted, z }))
}
