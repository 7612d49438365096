//! Tail transition operators `A_{N,k}`, `B_{N,k}`, `G_{N,k}` and the
//! reachability Gramians `W_k = Bbar_{N,k} Bbar_{N,k}'`.

use crate::linalg::{hcat, max_eigenvalue, min_eigenvalue, Mat};
use crate::system::{LtvSystem, EPS_CTRL};

/// Tail operators for every start index `k`.
///
/// `Bbar_{N,k} = [B_{N,k} .. B_{N,N}]` is never stored whole; the per-step
/// columns are kept and [`StackedOperators::bbar_tail`] assembles a block on
/// demand.
#[derive(Debug, Clone)]
pub struct StackedOperators {
    pub n: usize,
    pub m: usize,
    pub r: usize,
    pub horizon: usize,
    /// `A_{N,k}` for `k = 0..=N+1`, with `A_{N,N+1} = I`.
    transition: Vec<Mat>,
    /// `B_{N,k} = A_{N,k+1} B_k`.
    input: Vec<Mat>,
    /// `G_{N,k} = A_{N,k+1} G_k`.
    noise: Vec<Mat>,
    /// `W_k` for `k = 0..=N+1`, with `W_{N+1} = 0`.
    gramian: Vec<Mat>,
}

impl StackedOperators {
    pub fn transition(&self, k: usize) -> &Mat {
        &self.transition[k]
    }

    /// `Abar_N = A_N ... A_0`.
    pub fn abar(&self) -> &Mat {
        &self.transition[0]
    }

    pub fn input_block(&self, k: usize) -> &Mat {
        &self.input[k]
    }

    pub fn noise_block(&self, k: usize) -> &Mat {
        &self.noise[k]
    }

    pub fn gramian(&self, k: usize) -> &Mat {
        &self.gramian[k]
    }

    /// `Bbar_{N,k}`, an `n x m(N-k+1)` block row.
    pub fn bbar_tail(&self, k: usize) -> Mat {
        let blocks: Vec<&Mat> = self.input[k..].iter().collect();
        hcat(&blocks)
    }

    pub fn gbar_tail(&self, k: usize) -> Mat {
        let blocks: Vec<&Mat> = self.noise[k..].iter().collect();
        hcat(&blocks)
    }

    /// `Bbar_N = Bbar_{N,0}`.
    pub fn bbar(&self) -> Mat {
        self.bbar_tail(0)
    }
}

pub fn stack_operators(system: &LtvSystem) -> StackedOperators {
    let n = system.n;
    let steps = system.steps();
    let mut transition = vec![Mat::identity(n, n); steps + 1];
    let mut input = vec![Mat::zeros(n, system.m); steps];
    let mut noise = vec![Mat::zeros(n, system.r); steps];
    let mut gramian = vec![Mat::zeros(n, n); steps + 1];
    for k in (0..steps).rev() {
        let next = &transition[k + 1];
        input[k] = next * &system.b[k];
        noise[k] = next * &system.g[k];
        transition[k] = next * &system.a[k];
        let mut w = &gramian[k + 1] + &input[k] * input[k].transpose();
        // keep W_k exactly symmetric as it accumulates
        w = (&w + w.transpose()) * 0.5;
        gramian[k] = w;
    }
    StackedOperators {
        n,
        m: system.m,
        r: system.r,
        horizon: system.horizon,
        transition,
        input,
        noise,
        gramian,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controllability {
    pub controllable: bool,
    /// `lambda_min(W_0) / lambda_max(W_0)`; zero when `W_0 = 0`.
    pub eigen_ratio: f64,
}

pub fn gramian_ratio(w: &Mat) -> f64 {
    let hi = max_eigenvalue(w);
    if hi > 0.0 {
        min_eigenvalue(w) / hi
    } else {
        0.0
    }
}

pub fn controllability_check(ops: &StackedOperators) -> Controllability {
    let ratio = gramian_ratio(ops.gramian(0));
    Controllability {
        controllable: ratio > EPS_CTRL,
        eigen_ratio: ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::lti_example;
    use crate::linalg::relative_diff;

    #[test]
    fn single_step_operators() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
        let sys = LtvSystem::lti(a.clone(), b.clone(), Mat::zeros(2, 0), 0).unwrap();
        let ops = stack_operators(&sys);
        assert_eq!(ops.abar(), &a);
        assert_eq!(ops.bbar(), b);
        assert_eq!(ops.gramian(0), &(&b * b.transpose()));
    }

    #[test]
    fn identity_chain_repeats_input_column() {
        let b = Mat::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let horizon = 6;
        let sys = LtvSystem::lti(Mat::identity(3, 3), b.clone(), Mat::zeros(3, 0), horizon).unwrap();
        let ops = stack_operators(&sys);
        for k in 0..=horizon {
            assert_eq!(ops.input_block(k), &b);
        }
        let expected = &b * b.transpose() * (horizon as f64 + 1.0);
        assert!((ops.gramian(0) - expected).norm() < 1e-14);
    }

    #[test]
    fn lti_gramian_two_ways() {
        let (sys, _) = lti_example();
        let ops = stack_operators(&sys);
        let bbar = ops.bbar();
        let direct = &bbar * bbar.transpose();
        assert!(relative_diff(ops.gramian(0), &direct) < 1e-12);
        // product recursion A_{N,k} = A_{N,k+1} A_k
        for k in 0..sys.horizon {
            let rebuilt = ops.transition(k + 1) * &sys.a[k];
            assert!(relative_diff(ops.transition(k), &rebuilt) < 1e-15);
        }
    }

    #[test]
    fn controllability_cases() {
        let (sys, _) = lti_example();
        assert!(controllability_check(&stack_operators(&sys)).controllable);

        let dead = LtvSystem::lti(Mat::identity(2, 2), Mat::zeros(2, 1), Mat::zeros(2, 0), 4).unwrap();
        let c = controllability_check(&stack_operators(&dead));
        assert!(!c.controllable);
        assert_eq!(c.eigen_ratio, 0.0);

        let b = Mat::from_row_slice(2, 1, &[1.0, 0.0]);
        let partial = LtvSystem::lti(Mat::identity(2, 2), b, Mat::zeros(2, 0), 5).unwrap();
        assert!(!controllability_check(&stack_operators(&partial)).controllable);
    }
}
