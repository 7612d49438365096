#![allow(dead_code)]

use covsteer_core::{LtvSystem, Mat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Plain Nelder-Mead minimizer.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, iterations: usize) -> (Vec<f64>, f64) {
    let d = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..d {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[d].1 - simplex[0].1;
        if spread.abs() <= 1e-15 * simplex[0].1.abs().max(1e-300) {
            break;
        }
        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / d as f64;
            }
        }
        let toward = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[d].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = toward(-1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = f(&xe);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
        } else {
            let xc = toward(0.5);
            let fc = f(&xc);
            if fc < simplex[d].1 {
                simplex[d] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for (v, b) in x.iter_mut().zip(&best) {
                        *v = b + 0.5 * (*v - b);
                    }
                    *fx = f(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

fn pinv(m: &Mat) -> Mat {
    m.clone().pseudo_inverse(1e-13).expect("valid tolerance")
}

/// Orthogonal factor of a QR decomposition with the triangle's diagonal made positive.
fn orthogonal(params: &[f64], n: usize) -> Mat {
    let m = Mat::from_row_slice(n, n, params);
    let qr = m.qr();
    let (q, r) = (qr.q(), qr.r());
    let signs = Mat::from_diagonal(&Vector::from_fn(n, |i, _| if r[(i, i)] < 0.0 { -1.0 } else { 1.0 }));
    q * signs
}

/// Least-cost gain over every closed-loop map with `Xi Sigma0 Xi' = SigmaF`,
/// searched numerically. Feasible maps are written `C_F Q C_0^{-1}` with
/// Cholesky factors and orthogonal `Q`; the cheapest gain for each is the
/// pseudo-inverse solution of `Bbar L = Xi - Abar`.
pub fn diffusionless_cost_oracle(abar: &Mat, bbar: &Mat, sigma0: &Mat, sigma_f: &Mat, seed: u64) -> f64 {
    let n = abar.ncols();
    let p = abar.nrows();
    let c0 = sigma0.clone().cholesky().unwrap().l();
    let c0_inv = c0.clone().try_inverse().unwrap();
    let cf = sigma_f.clone().cholesky().unwrap().l();
    let bpinv = pinv(bbar);
    let cost = |q: &Mat| {
        let xi = &cf * q.rows(0, p) * &c0_inv;
        let l = &bpinv * (xi - abar);
        (&l * sigma0 * l.transpose()).trace()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::INFINITY;
    for _ in 0..12 {
        let start: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut x, mut fx) = nelder_mead(|v| cost(&orthogonal(v, n)), &start, 0.5, 20_000);
        // restart from the best point
        for _ in 0..4 {
            let (x2, f2) = nelder_mead(|v| cost(&orthogonal(v, n)), &x, 0.05, 20_000);
            x = x2;
            if f2 >= fx {
                fx = f2;
                break;
            }
            fx = f2;
        }
        best = best.min(fx);
    }
    best
}

/// `Abar x0 + Bbar U + Gbar W`, with every block product formed from scratch.
pub fn stacked_closed_form(sys: &LtvSystem, x0: &Vector, u: &[Vector], w: &[Vector]) -> Vector {
    let steps = sys.steps();
    let product = |from: usize| {
        let mut out = Mat::identity(sys.n, sys.n);
        for k in from..steps {
            out = &sys.a[k] * out;
        }
        out
    };
    let mut x = product(0) * x0;
    for k in 0..steps {
        let tail = product(k + 1);
        x += &tail * &sys.b[k] * &u[k];
        if sys.r > 0 {
            x += &tail * &sys.g[k] * &w[k];
        }
    }
    x
}

/// Two-state LTI problem with noise input `(0, g)` and `transitions` steps.
pub fn lti_variant(g: f64, transitions: usize) -> (LtvSystem, covsteer_core::BoundaryConditions) {
    let (sys, bc) = covsteer_core::examples::lti_example();
    let noise = Mat::from_row_slice(2, 1, &[0.0, g]);
    let sys = LtvSystem::lti(sys.a[0].clone(), sys.b[0].clone(), noise, transitions - 1).unwrap();
    (sys, bc)
}

pub fn reference_lambda() -> Mat {
    Mat::from_row_slice(2, 2, &[12.225, -3.398, -3.398, 6.543])
}
