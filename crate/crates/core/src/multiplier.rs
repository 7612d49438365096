//! The symmetric multiplier equation
//!
//! ```text
//! F(L) = sum_k Phi_k C_k Phi_k' - T = 0,   Phi_k = (I + W_k L)^{-1} A_{N,k}
//! ```
//!
//! with `C_0 = Sigma0`, `C_k = G_{k-1} G_{k-1}'` and target `T`, solved by
//! damped Newton over the `n(n+1)/2` free entries of the symmetric unknown,
//! plus continuation drivers for when Newton from a cold start stalls.

use crate::error::{Result, SteerError};
use crate::linalg::{psd_sqrt, solve_square, sym_eigen, symmetrize, Mat, Vector};
use crate::stacked::StackedOperators;

/// Solved multiplier together with its quality diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMatrix {
    pub lambda: Mat,
    /// `||F(Lambda)||_F / ||Sigma_F||_F`.
    pub residual_norm: f64,
    pub second_order_ok: bool,
    /// Smallest eigenvalue of `I + W_i^{1/2} Lambda W_i^{1/2}` over `i`.
    pub second_order_margin: f64,
    pub iterations: usize,
    pub strategy: SolveStrategy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStrategy {
    /// Newton from `Lambda = 0`.
    Direct,
    /// Newton warm-started along a continuation path.
    Continuation,
    /// Supplied by the caller and only checked.
    Given,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target, scaled by `||Sigma_F||_F`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Initial number of continuation steps from 0 to 1.
    pub continuation_steps: usize,
    pub jacobian: JacobianMode,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            continuation_steps: 4,
            jacobian: JacobianMode::Analytic,
        }
    }
}

/// Number of free entries of an `n x n` symmetric matrix.
pub fn sym_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Upper triangle, row-major.
pub fn pack_sym(m: &Mat) -> Vector {
    let n = m.nrows();
    let mut out = Vector::zeros(sym_len(n));
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            out[idx] = m[(i, j)];
            idx += 1;
        }
    }
    out
}

pub fn unpack_sym(v: &Vector, n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = v[idx];
            m[(j, i)] = v[idx];
            idx += 1;
        }
    }
    m
}

/// Per-step closed-loop quantities at a given multiplier.
pub struct ClosedLoop {
    /// `(I + W_k L)^{-1}`.
    pub resolvent: Vec<Mat>,
    /// `Phi_k`.
    pub phi: Vec<Mat>,
}

pub fn closed_loop(ops: &StackedOperators, lambda: &Mat) -> Result<ClosedLoop> {
    let n = ops.n;
    let eye = Mat::identity(n, n);
    let mut resolvent = Vec::with_capacity(ops.horizon + 1);
    let mut phi = Vec::with_capacity(ops.horizon + 1);
    for k in 0..=ops.horizon {
        let lhs = &eye + ops.gramian(k) * lambda;
        let inv = solve_square(&lhs, &eye).ok_or(SteerError::SingularClosedLoop { k })?;
        phi.push(&inv * ops.transition(k));
        resolvent.push(inv);
    }
    Ok(ClosedLoop { resolvent, phi })
}

/// One instance of the multiplier equation.
#[derive(Debug, Clone)]
pub struct LambdaEquation<'a> {
    ops: &'a StackedOperators,
    /// `C_k` for `k = 0..=N`.
    weights: Vec<Mat>,
    target: Mat,
}

impl<'a> LambdaEquation<'a> {
    pub fn new(ops: &'a StackedOperators, weights: Vec<Mat>, target: Mat) -> Self {
        debug_assert_eq!(weights.len(), ops.horizon + 1);
        Self { ops, weights, target }
    }

    /// Equation for the system with noise blocks `G_k` (the last one moves
    /// into the target).
    pub fn with_noise(ops: &'a StackedOperators, sigma0: &Mat, g: &[Mat], sigma_f: &Mat) -> Self {
        let horizon = ops.horizon;
        let mut weights = Vec::with_capacity(horizon + 1);
        weights.push(sigma0.clone());
        for gk in &g[..horizon] {
            weights.push(gk * gk.transpose());
        }
        let last = &g[horizon];
        let target = sigma_f - last * last.transpose();
        Self::new(ops, weights, target)
    }

    pub fn ops(&self) -> &StackedOperators {
        self.ops
    }

    pub fn target(&self) -> &Mat {
        &self.target
    }

    pub fn weights(&self) -> &[Mat] {
        &self.weights
    }

    /// `sum_k Phi_k C_k Phi_k'` before symmetrization, for diagnostics.
    pub fn raw_terminal(&self, lambda: &Mat) -> Result<Mat> {
        let cl = closed_loop(self.ops, lambda)?;
        let n = self.ops.n;
        let mut total = Mat::zeros(n, n);
        for (phi, c) in cl.phi.iter().zip(&self.weights) {
            total += phi * c * phi.transpose();
        }
        Ok(total)
    }

    pub fn residual(&self, lambda: &Mat) -> Result<Mat> {
        Ok(symmetrize(&(self.raw_terminal(lambda)? - &self.target)))
    }

    /// Jacobian of `pack(F)` with respect to `pack(L)`, from
    /// `d(I + W L)^{-1}[D] = -(I + W L)^{-1} W D (I + W L)^{-1}`.
    pub fn jacobian(&self, lambda: &Mat) -> Result<Mat> {
        let n = self.ops.n;
        let cl = closed_loop(self.ops, lambda)?;
        let mut left = Vec::with_capacity(cl.phi.len());
        let mut right = Vec::with_capacity(cl.phi.len());
        for (k, (phi, c)) in cl.phi.iter().zip(&self.weights).enumerate() {
            left.push(&cl.resolvent[k] * self.ops.gramian(k));
            right.push(phi * c * phi.transpose());
        }
        let q = sym_len(n);
        let mut jac = Mat::zeros(q, q);
        let mut col = 0;
        for i in 0..n {
            for j in i..n {
                let mut x = Mat::zeros(n, n);
                for (p, s) in left.iter().zip(&right) {
                    x += p.column(i) * s.row(j);
                    if i != j {
                        x += p.column(j) * s.row(i);
                    }
                }
                let d = -(&x + x.transpose());
                jac.set_column(col, &pack_sym(&d));
                col += 1;
            }
        }
        Ok(jac)
    }

    /// Central-difference Jacobian, kept to cross-check the analytic one.
    pub fn jacobian_fd(&self, lambda: &Mat) -> Result<Mat> {
        let n = self.ops.n;
        let q = sym_len(n);
        let base = pack_sym(lambda);
        let mut jac = Mat::zeros(q, q);
        for c in 0..q {
            let h = 1e-6 * base[c].abs().max(1.0);
            let mut plus = base.clone();
            plus[c] += h;
            let mut minus = base.clone();
            minus[c] -= h;
            let fp = pack_sym(&self.residual(&unpack_sym(&plus, n))?);
            let fm = pack_sym(&self.residual(&unpack_sym(&minus, n))?);
            jac.set_column(c, &((fp - fm) / (2.0 * h)));
        }
        Ok(jac)
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub lambda: Mat,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton on `F(L) = 0`. `scale` normalizes the residual norm.
/// An iterate that starts inside the second-order region never leaves it.
pub fn newton(
    eq: &LambdaEquation<'_>,
    init: &Mat,
    scale: f64,
    tolerance: f64,
    max_iterations: usize,
    mode: JacobianMode,
) -> Result<NewtonOutcome> {
    let n = eq.ops.n;
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut lambda = symmetrize(init);
    let mut f = eq.residual(&lambda)?;
    let mut norm = f.norm() / scale;
    let confined = second_order_margin(eq.ops, &lambda).0 > 0.0;
    for iter in 0..max_iterations {
        if norm <= tolerance {
            return Ok(NewtonOutcome {
                lambda,
                residual: norm,
                iterations: iter,
            });
        }
        let jac = match mode {
            JacobianMode::Analytic => eq.jacobian(&lambda)?,
            JacobianMode::FiniteDifference => eq.jacobian_fd(&lambda)?,
        };
        let rhs = Mat::from_column_slice(sym_len(n), 1, (-pack_sym(&f)).as_slice());
        let Some(step) = solve_square(&jac, &rhs) else {
            return Err(SteerError::NoConvergence {
                iterations: iter,
                residual: norm,
            });
        };
        let step = unpack_sym(&Vector::from_column_slice(step.as_slice()), n);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &lambda + &step * t;
            if let Ok(ft) = eq.residual(&trial) {
                let nt = ft.norm() / scale;
                let decrease = nt.is_finite() && nt < (1.0 - 1e-4 * t) * norm;
                if decrease && (!confined || second_order_margin(eq.ops, &trial).0 > 0.0) {
                    accepted = Some((trial, ft, nt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, ft, nt)) => {
                lambda = trial;
                f = ft;
                norm = nt;
            }
            None => {
                return Err(SteerError::NoConvergence {
                    iterations: iter,
                    residual: norm,
                })
            }
        }
    }
    if norm <= tolerance {
        Ok(NewtonOutcome {
            lambda,
            residual: norm,
            iterations: max_iterations,
        })
    } else {
        Err(SteerError::NoConvergence {
            iterations: max_iterations,
            residual: norm,
        })
    }
}

/// Follow a family `F_alpha`, `alpha: 0 -> 1`, starting from a known root
/// of `F_0`. Steps are halved when Newton fails at the next `alpha` or
/// lands on a root violating the second-order condition.
pub fn continuation<'a, M>(make: M, start: &Mat, scale: f64, opts: &SolverOptions) -> Result<NewtonOutcome>
where
    M: Fn(f64) -> LambdaEquation<'a>,
{
    let mut alpha = 0.0;
    let mut step = 1.0 / opts.continuation_steps.max(1) as f64;
    let mut lambda = start.clone();
    let mut total = 0;
    let min_step = 1.0 / 4096.0;
    // intermediate points only need to land in the next basin
    let loose = opts.tolerance.max(1e-8);
    loop {
        let next = (alpha + step).min(1.0);
        let tol = if next >= 1.0 { opts.tolerance } else { loose };
        let eq = make(next);
        let outcome = newton(&eq, &lambda, scale, tol, opts.max_iterations, opts.jacobian).and_then(|out| {
            // stay on the branch where the second-order condition holds
            let (margin, k) = second_order_margin(eq.ops, &out.lambda);
            if margin > 0.0 {
                Ok(out)
            } else {
                Err(SteerError::SecondOrderViolation {
                    k,
                    min_eigenvalue: margin,
                })
            }
        });
        match outcome {
            Ok(out) => {
                total += out.iterations;
                lambda = out.lambda;
                alpha = next;
                if alpha >= 1.0 {
                    return Ok(NewtonOutcome {
                        lambda,
                        residual: out.residual,
                        iterations: total,
                    });
                }
                step = (step * 1.5).min(1.0 - alpha);
            }
            Err(err) => {
                step *= 0.5;
                if step < min_step {
                    return Err(match err {
                        SteerError::NoConvergence { residual, .. } => SteerError::NoConvergence {
                            iterations: total,
                            residual,
                        },
                        other => other,
                    });
                }
            }
        }
    }
}

/// Check `I + Bbar_{N,i}' L Bbar_{N,i} > 0` for every `i`, via the
/// spectrally equivalent `I + W_i^{1/2} L W_i^{1/2}`.
/// Returns the smallest eigenvalue found and where.
pub fn second_order_margin(ops: &StackedOperators, lambda: &Mat) -> (f64, usize) {
    let n = ops.n;
    let eye = Mat::identity(n, n);
    let mut worst = (f64::INFINITY, 0);
    for i in 0..=ops.horizon {
        let root = psd_sqrt(ops.gramian(i));
        let m = &eye + &root * lambda * &root;
        let lo = sym_eigen(&m).0[0];
        if lo < worst.0 {
            worst = (lo, i);
        }
    }
    worst
}

pub(crate) fn finish(ops: &StackedOperators, out: NewtonOutcome, strategy: SolveStrategy) -> LambdaMatrix {
    let lambda = symmetrize(&out.lambda);
    let (margin, _) = second_order_margin(ops, &lambda);
    LambdaMatrix {
        lambda,
        residual_norm: out.residual,
        second_order_ok: margin > 0.0,
        second_order_margin: margin,
        iterations: out.iterations,
        strategy,
    }
}

pub(crate) fn require_second_order(ops: &StackedOperators, lm: &LambdaMatrix) -> Result<()> {
    if lm.second_order_ok {
        Ok(())
    } else {
        let (min_eigenvalue, k) = second_order_margin(ops, &lm.lambda);
        Err(SteerError::SecondOrderViolation { k, min_eigenvalue })
    }
}
