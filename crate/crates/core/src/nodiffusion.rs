//! Closed-form covariance steering when every `G_k` is zero.
//!
//! The feasible closed-loop maps are `Xi = V_F S_F^{1/2} R S_0^{-1/2} V_0'`
//! for orthogonal `R`; the cost is minimized by the Procrustes choice
//! `R* = U_Omega V_Omega'` where `Omega = S_F^{1/2} V_F' Theta Abar V_0 S_0^{1/2}`
//! and `Theta = (Bbar Bbar')^{-1}`. The same gain also follows from a
//! symmetric multiplier solving a quadratic matrix equation; both routes
//! are provided so they can check each other.

use crate::error::{Result, SteerError};
use crate::linalg::{sym_eigen, symmetrize, Mat, Vector};
use crate::multiplier::{
    closed_loop, continuation, finish, newton, require_second_order, LambdaEquation, LambdaMatrix, SolveStrategy,
    SolverOptions,
};
use crate::stacked::{gramian_ratio, StackedOperators};
use crate::system::{EPS_CTRL, EPS_PSD};

/// Eigen-factors of the boundary covariances and the SVD of `Omega`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub v0: Mat,
    pub s0: Vector,
    pub vf: Mat,
    pub sf: Vector,
    pub omega: Mat,
    pub u_omega: Mat,
    pub s_omega: Vector,
    pub v_omega: Mat,
    /// `U_Omega V_Omega'`; orthogonal in the full case, orthonormal rows
    /// when only a block of the terminal covariance is constrained.
    pub rstar: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionlessGain {
    /// `Ubar = L xtilde_0`, an `m(N+1) x n` gain.
    pub gain: Mat,
    /// `Xi = Abar + Bbar L`.
    pub closed_loop: Mat,
    /// `trace(L Sigma0 L')`.
    pub j_sigma: f64,
    /// `(Bbar Bbar')^{-1}` of the (possibly reduced) problem.
    pub theta: Mat,
    pub factors: Option<SvdFactors>,
}

impl DiffusionlessGain {
    /// Per-step blocks of the gain, each `m x n`.
    pub fn step_gain(&self, k: usize, m: usize) -> Mat {
        self.gain.rows(k * m, m).into_owned()
    }

    /// Cost from the trace identity
    /// `trace(Theta (Sigma_F + Abar Sigma0 Abar')) - 2 trace(S_Omega)`.
    pub fn trace_identity_cost(&self, abar: &Mat, sigma0: &Mat, sigma_f: &Mat) -> Option<f64> {
        let f = self.factors.as_ref()?;
        let inner = sigma_f + abar * sigma0 * abar.transpose();
        Some((&self.theta * inner).trace() - 2.0 * f.s_omega.sum())
    }

    /// Multiplier implied by the Procrustes solution,
    /// `V_F S_F^{-1/2} (Omega R*') S_F^{-1/2} V_F' - Theta`. Needs `Sigma_F > 0`
    /// and a full (square) terminal constraint.
    pub fn implied_multiplier(&self) -> Option<Mat> {
        let f = self.factors.as_ref()?;
        if f.rstar.nrows() != f.rstar.ncols() {
            return None;
        }
        let hi = f.sf.max();
        if !(f.sf.min() > EPS_PSD * hi) {
            return None;
        }
        let inv_root = f.sf.map(|s| 1.0 / s.sqrt());
        let left = &f.vf * Mat::from_diagonal(&inv_root);
        let middle = &f.omega * f.rstar.transpose();
        Some(symmetrize(&(&left * middle * left.transpose() - &self.theta)))
    }
}

fn spd_inverse(m: &Mat) -> Option<Mat> {
    m.clone().cholesky().map(|c| c.inverse())
}

fn initial_factors(sigma0: &Mat) -> Result<(Vector, Mat)> {
    let (s0, v0) = sym_eigen(sigma0);
    let hi = s0.max();
    let lo = s0.min();
    if !(hi > 0.0) || lo < EPS_PSD * hi {
        return Err(SteerError::SingularInitialCovariance { min_eigenvalue: lo });
    }
    Ok((s0, v0))
}

/// Procrustes construction for `Abar: p x n`, `Bbar: p x M`, `Sigma_F: p x p`.
fn procrustes(abar: &Mat, bbar: &Mat, sigma0: &Mat, sigma_f: &Mat, reduced: bool) -> Result<DiffusionlessGain> {
    let p = abar.nrows();
    if sigma_f.shape() != (p, p) || sigma0.nrows() != abar.ncols() {
        return Err(SteerError::DimensionMismatch(format!(
            "terminal covariance must be {p}x{p} and initial covariance {0}x{0}",
            abar.ncols()
        )));
    }
    let gram = bbar * bbar.transpose();
    let ratio = gramian_ratio(&gram);
    let uncontrollable = || {
        if reduced {
            SteerError::ReducedUncontrollable { ratio }
        } else {
            SteerError::SingularGramian { ratio }
        }
    };
    if !(ratio > EPS_CTRL) {
        return Err(uncontrollable());
    }
    let theta = spd_inverse(&gram).ok_or_else(uncontrollable)?;
    let (s0, v0) = initial_factors(sigma0)?;
    let (sf_raw, vf) = sym_eigen(sigma_f);
    let sf = sf_raw.map(|s| s.max(0.0));

    let s0_root = s0.map(f64::sqrt);
    let s0_inv_root = s0.map(|s| 1.0 / s.sqrt());
    let sf_root = sf.map(f64::sqrt);

    let omega = Mat::from_diagonal(&sf_root) * vf.transpose() * &theta * abar * &v0 * Mat::from_diagonal(&s0_root);
    let svd = omega.clone().svd(true, true);
    let u_omega = svd.u.clone().expect("requested U");
    let v_omega = svd.v_t.clone().expect("requested V'").transpose();
    let s_omega = svd.singular_values.clone();
    let rstar = &u_omega * v_omega.transpose();

    let xi = &vf * Mat::from_diagonal(&sf_root) * &rstar * Mat::from_diagonal(&s0_inv_root) * v0.transpose();
    let gain = bbar.transpose() * &theta * (&xi - abar);
    let closed_loop = abar + bbar * &gain;
    let j_sigma = (&gain * sigma0 * gain.transpose()).trace();
    Ok(DiffusionlessGain {
        gain,
        closed_loop,
        j_sigma,
        theta,
        factors: Some(SvdFactors {
            v0,
            s0,
            vf,
            sf,
            omega,
            u_omega,
            s_omega,
            v_omega,
            rstar,
        }),
    })
}

/// Optimal diffusionless gain via the SVD construction.
pub fn steer_cov_svd(ops: &StackedOperators, sigma0: &Mat, sigma_f: &Mat) -> Result<DiffusionlessGain> {
    procrustes(ops.abar(), &ops.bbar(), sigma0, sigma_f, false)
}

/// Steering of `D Sigma_{N+1} D'` only, by running the SVD construction on
/// the reduced transition pair `(D Abar, D Bbar)`.
pub fn steer_partial_cov(
    ops: &StackedOperators,
    sigma0: &Mat,
    selector: &Mat,
    sigma_f_partial: &Mat,
) -> Result<DiffusionlessGain> {
    if selector.ncols() != ops.n || selector.nrows() == 0 || selector.nrows() > ops.n {
        return Err(SteerError::DimensionMismatch(format!(
            "selector must be n_p x {} with n_p <= {}",
            ops.n, ops.n
        )));
    }
    let abar = selector * ops.abar();
    let bbar = selector * ops.bbar();
    procrustes(&abar, &bbar, sigma0, sigma_f_partial, true)
}

/// Residual of the quadratic matrix equation
/// `(Theta Sigma_F) L + L (Theta Sigma_F)' + L Sigma_F L + Theta (Sigma_F - Abar Sigma0 Abar') Theta`.
pub fn riccati_residual(ops: &StackedOperators, lambda: &Mat, sigma0: &Mat, sigma_f: &Mat) -> Option<Mat> {
    let theta = spd_inverse(ops.gramian(0))?;
    let abar = ops.abar();
    let ts = &theta * sigma_f;
    let drift = sigma_f - abar * sigma0 * abar.transpose();
    Some(&ts * lambda + lambda * ts.transpose() + lambda * sigma_f * lambda + &theta * drift * &theta)
}

/// Gain in multiplier form, `L = -Bbar' Lambda (I + W_0 Lambda)^{-1} Abar`.
pub fn gain_from_multiplier(ops: &StackedOperators, lambda: &Mat, sigma0: &Mat) -> Result<DiffusionlessGain> {
    let cl = closed_loop(ops, lambda)?;
    let xi = cl.phi[0].clone();
    let bbar = ops.bbar();
    let gain = -(bbar.transpose() * lambda * &xi);
    let closed_loop = ops.abar() + &bbar * &gain;
    let j_sigma = (&gain * sigma0 * gain.transpose()).trace();
    let theta = spd_inverse(ops.gramian(0)).ok_or(SteerError::SingularGramian {
        ratio: gramian_ratio(ops.gramian(0)),
    })?;
    Ok(DiffusionlessGain {
        gain,
        closed_loop,
        j_sigma,
        theta,
        factors: None,
    })
}

/// Diffusionless multiplier by Newton on `Phi_0 Sigma0 Phi_0' = Sigma_F`.
/// Falls back to continuation on the target
/// `(1 - a) Abar Sigma0 Abar' + a Sigma_F`, whose root at `a = 0` is `0`.
pub fn solve_diffusionless_multiplier(
    ops: &StackedOperators,
    sigma0: &Mat,
    sigma_f: &Mat,
    opts: &SolverOptions,
) -> Result<LambdaMatrix> {
    let n = ops.n;
    let weights = || {
        let mut w = vec![Mat::zeros(n, n); ops.horizon + 1];
        w[0] = sigma0.clone();
        w
    };
    let scale = sigma_f.norm();
    let eq = LambdaEquation::new(ops, weights(), sigma_f.clone());
    let zero = Mat::zeros(n, n);
    let direct = newton(&eq, &zero, scale, opts.tolerance, opts.max_iterations, opts.jacobian)
        .map(|out| finish(ops, out, SolveStrategy::Direct));
    if let Ok(lm) = &direct {
        if lm.second_order_ok {
            return direct;
        }
    }
    let open_loop = ops.abar() * sigma0 * ops.abar().transpose();
    let homotopy = continuation(
        |a| LambdaEquation::new(ops, weights(), &open_loop * (1.0 - a) + sigma_f * a),
        &zero,
        scale,
        opts,
    )
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

/// Diffusionless steering through the multiplier equation.
pub fn steer_cov_riccati(
    ops: &StackedOperators,
    sigma0: &Mat,
    sigma_f: &Mat,
    opts: &SolverOptions,
) -> Result<(DiffusionlessGain, LambdaMatrix)> {
    let ratio = gramian_ratio(ops.gramian(0));
    if !(ratio > EPS_CTRL) {
        return Err(SteerError::SingularGramian { ratio });
    }
    initial_factors(sigma0)?;
    let lm = solve_diffusionless_multiplier(ops, sigma0, sigma_f, opts)?;
    let gain = gain_from_multiplier(ops, &lm.lambda, sigma0)?;
    Ok((gain, lm))
}
