//! Terminal-cost LQG: minimize `E[sum u_k'u_k + x_{N+1}' Q_f x_{N+1}]`.
//! With `Q_f = Lambda` its gains reproduce the covariance-steering policy.

use serde::Serialize;

use crate::diffusion::SteeringPolicy;
use crate::error::{Result, SteerError};
use crate::linalg::{min_eigenvalue, symmetrize, Mat, Vector};
use crate::mean::MeanPlan;
use crate::simulation::sample_run;
use crate::system::{BoundaryConditions, LtvSystem};

#[derive(Debug, Clone, PartialEq)]
pub struct LqgSolution {
    pub qf: Mat,
    /// `P_0 ..= P_{N+1}`, with `P_{N+1} = Q_f`.
    pub p: Vec<Mat>,
    /// `L_k`, `k = 0..=N`, for `u_k = -L_k x_k`.
    pub gains: Vec<Mat>,
}

impl LqgSolution {
    pub fn horizon(&self) -> usize {
        self.gains.len() - 1
    }

    /// `mu0' P_0 mu0 + tr(P_0 Sigma0) + sum_k tr(P_{k+1} G_k G_k')`.
    pub fn expected_cost(&self, system: &LtvSystem, mu0: &Vector, sigma0: &Mat) -> f64 {
        let p0 = &self.p[0];
        let mut total = (mu0.transpose() * p0 * mu0)[(0, 0)] + (p0 * sigma0).trace();
        for (k, g) in system.g.iter().enumerate() {
            total += (&self.p[k + 1] * g * g.transpose()).trace();
        }
        total
    }

    /// Covariance of `x_{N+1}` under `u_k = -L_k x_k`.
    pub fn terminal_covariance(&self, system: &LtvSystem, sigma0: &Mat) -> Mat {
        let mut sigma = sigma0.clone();
        for k in 0..=system.horizon {
            let cl = &system.a[k] - &system.b[k] * &self.gains[k];
            let g = &system.g[k];
            sigma = symmetrize(&(&cl * sigma * cl.transpose() + g * g.transpose()));
        }
        sigma
    }
}

/// `P_k = A'PA - A'PB (I + B'PB)^{-1} B'PA` backward from `P_{N+1} = Q_f`.
pub fn riccati_backward(system: &LtvSystem, qf: &Mat) -> Result<LqgSolution> {
    let n = system.n;
    if qf.shape() != (n, n) {
        return Err(SteerError::DimensionMismatch(format!(
            "terminal weight must be {n}x{n}"
        )));
    }
    let steps = system.steps();
    let mut p = vec![Mat::zeros(n, n); steps + 1];
    let mut gains = vec![Mat::zeros(system.m, n); steps];
    p[steps] = symmetrize(qf);
    let eye = Mat::identity(system.m, system.m);
    for k in (0..steps).rev() {
        let (a, b) = (&system.a[k], &system.b[k]);
        let pb = &p[k + 1] * b;
        let inner = symmetrize(&(&eye + b.transpose() * &pb));
        let chol = inner.clone().cholesky().ok_or_else(|| SteerError::IndefiniteStep {
            k,
            min_eigenvalue: min_eigenvalue(&inner),
        })?;
        let gain = chol.solve(&(pb.transpose() * a));
        let pa = &p[k + 1] * a;
        p[k] = symmetrize(&(a.transpose() * &pa - a.transpose() * &pb * &gain));
        gains[k] = gain;
    }
    Ok(LqgSolution {
        qf: p[steps].clone(),
        p,
        gains,
    })
}

/// LQG feedback on the deviation from the mean trajectory, superposed on the
/// open-loop mean plan: `u_k = E[u_k] - L_k (x_k - mu_k)`.
#[derive(Debug, Clone)]
pub struct LqgPolicy {
    pub mean_plan: MeanPlan,
    /// Noise-free mean trajectory `mu_0 ..= mu_{N+1}`.
    pub mean_states: Vec<Vector>,
    pub gains: Vec<Mat>,
}

impl LqgPolicy {
    pub fn new(system: &LtvSystem, bc: &BoundaryConditions, mean_plan: MeanPlan, lqg: &LqgSolution) -> Self {
        let mut mean_states = Vec::with_capacity(system.steps() + 1);
        mean_states.push(bc.mu0.clone());
        for k in 0..system.steps() {
            let next = &system.a[k] * &mean_states[k] + &system.b[k] * &mean_plan.u_mean[k];
            mean_states.push(next);
        }
        Self {
            mean_plan,
            mean_states,
            gains: lqg.gains.clone(),
        }
    }

    /// Plain regulator `u_k = -L_k x_k`.
    pub fn regulator(system: &LtvSystem, lqg: &LqgSolution) -> Self {
        Self {
            mean_plan: MeanPlan::zeros(system.steps(), system.m),
            mean_states: vec![Vector::zeros(system.n); system.steps() + 1],
            gains: lqg.gains.clone(),
        }
    }

    pub fn input(&self, k: usize, x: &Vector) -> Vector {
        &self.mean_plan.u_mean[k] - &self.gains[k] * (x - &self.mean_states[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub realizations: usize,
    /// Largest `|u_cc - u_lqg|` over every step and realization.
    pub max_deviation: f64,
    pub worst_step: usize,
    /// Largest input magnitude seen, for scale.
    pub max_input: f64,
}

impl EquivalenceReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_deviation <= tolerance
    }
}

/// Run both controllers on identical noise streams and compare inputs.
pub fn equivalence_check(
    system: &LtvSystem,
    bc: &BoundaryConditions,
    policy: &SteeringPolicy,
    lqg: &LqgPolicy,
    realizations: usize,
    seed: u64,
) -> EquivalenceReport {
    let mut report = EquivalenceReport {
        realizations,
        max_deviation: 0.0,
        worst_step: 0,
        max_input: 0.0,
    };
    for run in 0..realizations {
        let cc = sample_run(system, policy, bc, seed, run as u64);
        let lq = sample_run(system, lqg, bc, seed, run as u64);
        for (k, (a, b)) in cc.inputs.iter().zip(&lq.inputs).enumerate() {
            let dev = (a - b).amax();
            if dev > report.max_deviation || dev.is_nan() {
                report.max_deviation = dev;
                report.worst_step = k;
            }
            report.max_input = report.max_input.max(a.amax());
        }
    }
    report
}
