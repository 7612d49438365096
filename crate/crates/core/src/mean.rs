//! Minimum-energy open-loop steering of the state mean.

use crate::error::{Result, SteerError};
use crate::linalg::{Mat, Vector};
use crate::stacked::{controllability_check, StackedOperators};
use crate::system::BoundaryConditions;

/// Mean input sequence `E[U_N]` split into per-step blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPlan {
    pub u_mean: Vec<Vector>,
    /// `sum_k |E[u_k]|^2`.
    pub j_mu: f64,
    /// `|Abar mu0 + Bbar E[U] - muF|`.
    pub residual: f64,
}

impl MeanPlan {
    pub fn zeros(steps: usize, m: usize) -> Self {
        Self {
            u_mean: vec![Vector::zeros(m); steps],
            j_mu: 0.0,
            residual: 0.0,
        }
    }

    pub fn stacked(&self) -> Vector {
        crate::linalg::vcat(&self.u_mean)
    }
}

/// Absolute residual tolerance for the mean constraint.
pub fn mean_tolerance(mu_f: &Vector) -> f64 {
    1e-8 * (1.0 + mu_f.norm())
}

/// `E[U*] = Bbar' W_0^{-1} (muF - Abar mu0)`, block `k` being `B_{N,k}' y`.
pub fn steer_mean(ops: &StackedOperators, bc: &BoundaryConditions) -> Result<MeanPlan> {
    let n = ops.n;
    if bc.mu0.len() != n || bc.mu_f.len() != n {
        return Err(SteerError::DimensionMismatch(format!(
            "mean vectors must have length {n}"
        )));
    }
    let ctrl = controllability_check(ops);
    if !ctrl.controllable {
        return Err(SteerError::SingularGramian {
            ratio: ctrl.eigen_ratio,
        });
    }
    let gap = &bc.mu_f - ops.abar() * &bc.mu0;
    let chol = ops.gramian(0).clone().cholesky().ok_or(SteerError::SingularGramian {
        ratio: ctrl.eigen_ratio,
    })?;
    let y = chol.solve(&gap);
    let u_mean: Vec<Vector> = (0..=ops.horizon).map(|k| ops.input_block(k).transpose() * &y).collect();
    let j_mu = u_mean.iter().map(|u| u.norm_squared()).sum();
    let mut reached = ops.abar() * &bc.mu0;
    for (k, u) in u_mean.iter().enumerate() {
        reached += ops.input_block(k) * u;
    }
    let residual = (reached - &bc.mu_f).norm();
    let tolerance = mean_tolerance(&bc.mu_f);
    if !(residual <= tolerance) {
        return Err(SteerError::MeanResidual { residual, tolerance });
    }
    Ok(MeanPlan { u_mean, j_mu, residual })
}

/// Minimum-norm pseudo-inverse solve of `Bbar U = rhs` via SVD, kept as an
/// independent reference for the Gramian route.
pub fn min_norm_solution(bbar: &Mat, rhs: &Vector) -> Vector {
    let svd = bbar.clone().svd(true, true);
    svd.solve(rhs, 1e-13 * svd.singular_values.max())
        .expect("SVD with both factors")
}
