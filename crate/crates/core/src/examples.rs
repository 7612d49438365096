//! Benchmark problems: a two-state LTI system and a cart-pole swing-up
//! linearized along a nominal trajectory and discretized with Euler steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{Mat, Vector};
use crate::stacked::{controllability_check, stack_operators};
use crate::system::{BoundaryConditions, LtvSystem};

/// Oscillatory two-state LTI example, horizon `N = 100`.
pub fn lti_example() -> (LtvSystem, BoundaryConditions) {
    let a = Mat::from_row_slice(2, 2, &[1.9986, -1.0, 1.0, 0.0]);
    let b = Mat::from_row_slice(2, 1, &[0.03125, 0.0]);
    let g = Mat::from_row_slice(2, 1, &[0.0, 0.03]);
    let system = LtvSystem::lti(a, b, g, 100).expect("consistent shapes");
    let bc = BoundaryConditions::new(
        Vector::from_row_slice(&[-1.0, 1.0]),
        Mat::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 3.0]),
        Vector::from_row_slice(&[1.0, -1.0]),
        Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.0]),
    );
    (system, bc)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartPoleParams {
    /// Pole mass, kg.
    pub m_p: f64,
    /// Cart mass, kg.
    pub m_c: f64,
    /// Pole length, m.
    pub l: f64,
    pub g: f64,
    /// Sample time, s.
    pub ts: f64,
    /// Swing-up duration, s.
    pub t_final: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            m_p: 0.01,
            m_c: 1.0,
            l: 0.25,
            g: 9.81,
            ts: 0.001,
            t_final: 1.0,
        }
    }
}

impl CartPoleParams {
    /// Number of Euler steps, `T / Ts` rounded; `None` unless every
    /// parameter is positive and the ratio is integral.
    pub fn steps(&self) -> Option<usize> {
        let all_positive = [self.m_p, self.m_c, self.l, self.g, self.ts, self.t_final]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite());
        if !all_positive {
            return None;
        }
        let ratio = self.t_final / self.ts;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio {
            return None;
        }
        Some(steps as usize)
    }

    fn denominator(&self, theta: f64) -> f64 {
        self.m_c + self.m_p * theta.sin().powi(2)
    }
}

/// State `(theta, theta_dot, y, y_dot)`; `theta = 0` hangs down.
pub type CartPoleState = [f64; 4];

/// `(theta_dot, theta_ddot, y_dot, y_ddot)`.
pub fn cartpole_dynamics(state: &CartPoleState, u: f64, p: &CartPoleParams) -> CartPoleState {
    let [theta, omega, _, v] = *state;
    let (s, c) = theta.sin_cos();
    let d = p.denominator(theta);
    let theta_ddot = (-(u + p.m_p * p.l * omega * omega * s) * c - (p.m_c + p.m_p) * p.g * s) / (p.l * d);
    let y_ddot = (u + p.m_p * s * (p.l * omega * omega + p.g * c)) / d;
    [omega, theta_ddot, v, y_ddot]
}

/// One forward Euler step of the nonlinear model.
pub fn euler_step(state: &CartPoleState, u: f64, p: &CartPoleParams) -> CartPoleState {
    let f = cartpole_dynamics(state, u, p);
    let mut next = *state;
    for (x, dx) in next.iter_mut().zip(f) {
        *x += p.ts * dx;
    }
    next
}

/// Analytic `(df/dx, df/du)` of [`cartpole_dynamics`].
pub fn cartpole_jacobians(state: &CartPoleState, u: f64, p: &CartPoleParams) -> (Mat, Mat) {
    let [theta, omega, _, _] = *state;
    let (s, c) = theta.sin_cos();
    let (mp, mc, l, g) = (p.m_p, p.m_c, p.l, p.g);
    let d = p.denominator(theta);
    let d_theta = 2.0 * mp * s * c;
    let w2 = omega * omega;

    let n_t = -(u + mp * l * w2 * s) * c - (mc + mp) * g * s;
    let n_t_theta = -mp * l * w2 * c * c + (u + mp * l * w2 * s) * s - (mc + mp) * g * c;
    let n_t_omega = -2.0 * mp * l * omega * s * c;

    let n_y = u + mp * l * w2 * s + mp * g * s * c;
    let n_y_theta = mp * l * w2 * c + mp * g * (c * c - s * s);
    let n_y_omega = 2.0 * mp * l * omega * s;

    let mut jx = Mat::zeros(4, 4);
    jx[(0, 1)] = 1.0;
    jx[(1, 0)] = (n_t_theta * d - n_t * d_theta) / (l * d * d);
    jx[(1, 1)] = n_t_omega / (l * d);
    jx[(2, 3)] = 1.0;
    jx[(3, 0)] = (n_y_theta * d - n_y * d_theta) / (d * d);
    jx[(3, 1)] = n_y_omega / d;

    let ju = Mat::from_column_slice(4, 1, &[0.0, -c / (l * d), 0.0, 1.0 / d]);
    (jx, ju)
}

/// Central-difference Jacobians, for checking the analytic ones.
pub fn cartpole_jacobians_fd(state: &CartPoleState, u: f64, p: &CartPoleParams, h: f64) -> (Mat, Mat) {
    let mut jx = Mat::zeros(4, 4);
    for j in 0..4 {
        let mut plus = *state;
        let mut minus = *state;
        plus[j] += h;
        minus[j] -= h;
        let fp = cartpole_dynamics(&plus, u, p);
        let fm = cartpole_dynamics(&minus, u, p);
        for i in 0..4 {
            jx[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let fp = cartpole_dynamics(state, u + h, p);
    let fm = cartpole_dynamics(state, u - h, p);
    let ju = Mat::from_fn(4, 1, |i, _| (fp[i] - fm[i]) / (2.0 * h));
    (jx, ju)
}

/// Swing-up angle profile `theta(t) = sum_i c_i (t/T)^i`.
///
/// The coefficients minimize the integral of `theta''(tau)^2` under
/// rest-to-rest endpoint conditions from 0 to pi, with the horizontal
/// crossing pinned at `tau = 0.4` and `theta_ddot = -g/l` there, which
/// is the only angular acceleration the model allows when `cos(theta) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwingUpProfile {
    pub coefficients: Vec<f64>,
    pub t_final: f64,
    pub crossing: f64,
}

const PROFILE_DEGREE: usize = 9;
const CROSSING: f64 = 0.4;

impl SwingUpProfile {
    pub fn new(p: &CartPoleParams) -> Self {
        let q = PROFILE_DEGREE + 1;
        // Gram matrix of theta'' on [0, 1]
        let mut gram = Mat::zeros(q, q);
        for i in 2..q {
            for j in 2..q {
                let (fi, fj) = (i as f64, j as f64);
                gram[(i, j)] = fi * (fi - 1.0) * fj * (fj - 1.0) / (fi + fj - 3.0);
            }
        }
        let rows = [
            basis(0.0, 0),
            basis(0.0, 1),
            basis(1.0, 0),
            basis(1.0, 1),
            basis(CROSSING, 0),
            basis(CROSSING, 2),
        ];
        let rhs = [
            0.0,
            0.0,
            std::f64::consts::PI,
            0.0,
            std::f64::consts::FRAC_PI_2,
            -(p.g / p.l) * p.t_final * p.t_final,
        ];
        let c = rows.len();
        let mut kkt = Mat::zeros(q + c, q + c);
        kkt.view_mut((0, 0), (q, q)).copy_from(&(gram * 2.0));
        let mut b = Vector::zeros(q + c);
        for (r, (row, value)) in rows.iter().zip(rhs).enumerate() {
            for (j, v) in row.iter().enumerate() {
                kkt[(q + r, j)] = *v;
                kkt[(j, q + r)] = *v;
            }
            b[q + r] = value;
        }
        let sol = kkt.lu().solve(&b).expect("KKT system is nonsingular");
        Self {
            coefficients: sol.rows(0, q).iter().copied().collect(),
            t_final: p.t_final,
            crossing: CROSSING * p.t_final,
        }
    }

    /// `d^order theta / dt^order` at time `t`.
    pub fn derivative(&self, t: f64, order: usize) -> f64 {
        let tau = t / self.t_final;
        let row = basis(tau, order);
        let value: f64 = row.iter().zip(&self.coefficients).map(|(r, c)| r * c).sum();
        value / self.t_final.powi(order as i32)
    }
}

/// Row of `d^order/dtau^order tau^i` for `i = 0..=PROFILE_DEGREE`.
fn basis(tau: f64, order: usize) -> Vec<f64> {
    (0..=PROFILE_DEGREE)
        .map(|i| {
            if i < order {
                return 0.0;
            }
            let falling: f64 = (0..order).map(|j| (i - j) as f64).product();
            falling * tau.powi((i - order) as i32)
        })
        .collect()
}

/// Input that produces `theta_ddot` at `(theta, theta_dot)`.
///
/// Where `cos(theta)` vanishes the quotient is replaced by its limit along
/// the profile, which needs the jerk.
pub fn inverse_dynamics(theta: f64, omega: f64, alpha: f64, jerk: f64, p: &CartPoleParams) -> f64 {
    let (s, c) = theta.sin_cos();
    let d = p.denominator(theta);
    let centripetal = p.m_p * p.l * omega * omega * s;
    if c.abs() < 1e-7 {
        jerk * p.l * d / (s * omega) - centripetal
    } else {
        -(alpha * p.l * d + (p.m_c + p.m_p) * p.g * s) / c - centripetal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalTrajectory {
    pub times: Vec<f64>,
    /// `N + 2` states.
    pub states: Vec<CartPoleState>,
    /// `N + 1` inputs.
    pub inputs: Vec<f64>,
    pub profile: SwingUpProfile,
}

/// Sample the swing-up profile at `Ts`, recover the input by inverse
/// dynamics and Euler-integrate the cart.
pub fn nominal_trajectory(p: &CartPoleParams) -> NominalTrajectory {
    let steps = p.steps().expect("positive parameters with integral T / Ts");
    let profile = SwingUpProfile::new(p);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut inputs = Vec::with_capacity(steps);
    let (mut y, mut v) = (0.0, 0.0);
    for k in 0..=steps {
        let t = k as f64 * p.ts;
        let theta = profile.derivative(t, 0);
        let omega = profile.derivative(t, 1);
        times.push(t);
        states.push([theta, omega, y, v]);
        if k < steps {
            let alpha = profile.derivative(t, 2);
            let jerk = profile.derivative(t, 3);
            let u = inverse_dynamics(theta, omega, alpha, jerk, p);
            let f = cartpole_dynamics(&[theta, omega, y, v], u, p);
            y += p.ts * v;
            v += p.ts * f[3];
            inputs.push(u);
        }
    }
    NominalTrajectory {
        times,
        states,
        inputs,
        profile,
    }
}

/// Process noise input of the linearized cart-pole.
pub fn cartpole_noise() -> Mat {
    Mat::from_column_slice(4, 1, &[0.0, 0.004, 0.0, 0.008])
}

/// `A_k = I + Ts df/dx`, `B_k = Ts df/du` along `nominal`, with the given
/// constant `G`.
pub fn linearize_along(nominal: &NominalTrajectory, p: &CartPoleParams, g: &Mat) -> LtvSystem {
    let eye = Mat::identity(4, 4);
    let mut a = Vec::with_capacity(nominal.inputs.len());
    let mut b = Vec::with_capacity(nominal.inputs.len());
    for (x, u) in nominal.states.iter().zip(&nominal.inputs) {
        let (jx, ju) = cartpole_jacobians(x, *u, p);
        a.push(&eye + jx * p.ts);
        b.push(ju * p.ts);
    }
    let steps = a.len();
    LtvSystem::new(a, b, vec![g.clone(); steps]).expect("consistent shapes")
}

/// Cart-pole steering problem: `N = T/Ts - 1`, zero means,
/// `Sigma_0 = Sigma_F = 0.01 I`.
pub fn linearize_discretize(p: &CartPoleParams) -> (LtvSystem, BoundaryConditions) {
    let nominal = nominal_trajectory(p);
    let system = linearize_along(&nominal, p, &cartpole_noise());
    let cov = Mat::identity(4, 4) * 0.01;
    let bc = BoundaryConditions::new(Vector::zeros(4), cov.clone(), Vector::zeros(4), cov);
    (system, bc)
}

pub fn cartpole_example() -> (LtvSystem, BoundaryConditions) {
    linearize_discretize(&CartPoleParams::default())
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(&mut *rng);
        scale * z
    })
}

fn spd(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let m = normal_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
    &m * m.transpose() + Mat::identity(n, n) * 0.1
}

/// Seeded random problem with a controllable system, SPD boundary
/// covariances and `Sigma_F - G_N G_N'` positive definite. Needs
/// `m (horizon + 1) >= n`; set `r = 0` for a diffusionless one.
pub fn random_problem(seed: u64, n: usize, m: usize, r: usize, horizon: usize) -> (LtvSystem, BoundaryConditions) {
    assert!(m * (horizon + 1) >= n, "too few inputs to control the state");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let system = loop {
        let steps = horizon + 1;
        let a = (0..steps)
            .map(|_| Mat::identity(n, n) + normal_matrix(&mut rng, n, n, 0.3))
            .collect();
        let b = (0..steps).map(|_| normal_matrix(&mut rng, n, m, 1.0)).collect();
        let g = (0..steps).map(|_| normal_matrix(&mut rng, n, r, 0.2)).collect();
        let sys = LtvSystem::new(a, b, g).expect("consistent shapes");
        if controllability_check(&stack_operators(&sys)).eigen_ratio > 1e-4 {
            break sys;
        }
    };
    let last = &system.g[horizon];
    let sigma0 = spd(&mut rng, n);
    let sigma_f = spd(&mut rng, n) + last * last.transpose();
    let mu0 = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    let mu_f = Vector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    (system, BoundaryConditions::new(mu0, sigma0, mu_f, sigma_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn equilibria() {
        let p = CartPoleParams::default();
        let down = cartpole_dynamics(&[0.0, 0.0, 0.3, 0.0], 0.0, &p);
        assert_eq!(down[1], 0.0);
        assert_eq!(down[3], 0.0);
        let up = cartpole_dynamics(&[PI, 0.0, 0.0, 0.0], 0.0, &p);
        assert!(up[1].abs() < 1e-12);
    }

    #[test]
    fn horizontal_pole() {
        let p = CartPoleParams::default();
        let f = cartpole_dynamics(&[FRAC_PI_2, 0.0, 0.0, 0.0], 0.0, &p);
        let (mp, mc, l, g) = (p.m_p, p.m_c, p.l, p.g);
        let s: f64 = 1.0;
        let c = FRAC_PI_2.cos();
        let theta_ddot = (-(mp * l * 0.0 * s) * c - (mc + mp) * g * s) / (l * (mc + mp * s * s));
        let y_ddot = (mp * s * (g * c)) / (mc + mp * s * s);
        assert!((f[1] - theta_ddot).abs() < 1e-12);
        assert!((f[1] + 39.24).abs() < 1e-12);
        assert!((f[3] - y_ddot).abs() < 1e-15);
    }

    #[test]
    fn input_sensitivity_at_rest() {
        let p = CartPoleParams::default();
        let (jx, ju) = cartpole_jacobians(&[0.0; 4], 0.0, &p);
        assert!((ju[(1, 0)] + 4.0).abs() < 1e-14);
        assert!((ju[(3, 0)] - 1.0).abs() < 1e-14);
        let expected = -(p.m_c + p.m_p) * p.g / (p.l * p.m_c);
        assert!((jx[(1, 0)] - expected).abs() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = CartPoleParams::default();
        for (x, u) in [
            ([0.3, -1.2, 0.5, 0.1], 2.0),
            ([2.1, 4.0, -0.2, 1.5], -7.5),
            ([FRAC_PI_2, 3.3, 0.0, 0.0], 12.0),
        ] {
            let (jx, ju) = cartpole_jacobians(&x, u, &p);
            let (fx, fu) = cartpole_jacobians_fd(&x, u, &p, 1e-6);
            assert!((&jx - &fx).amax() < 1e-6 * jx.amax().max(1.0), "{jx} {fx}");
            assert!((&ju - &fu).amax() < 1e-6);
        }
    }

    #[test]
    fn profile_endpoints_and_crossing() {
        let p = CartPoleParams::default();
        let prof = SwingUpProfile::new(&p);
        assert!(prof.derivative(0.0, 0).abs() < 1e-12);
        assert!((prof.derivative(1.0, 0) - PI).abs() < 1e-10);
        assert!(prof.derivative(0.0, 1).abs() < 1e-12);
        assert!(prof.derivative(1.0, 1).abs() < 1e-10);
        assert!((prof.derivative(0.4, 0) - FRAC_PI_2).abs() < 1e-10);
        assert!((prof.derivative(0.4, 2) + p.g / p.l).abs() < 1e-9);
        // monotone rise, so the crossing is unique
        let mut prev = 0.0;
        for k in 1..=1000 {
            let th = prof.derivative(k as f64 * 1e-3, 0);
            assert!(th >= prev - 1e-12, "not monotone at {k}");
            prev = th;
        }
    }

    #[test]
    fn nominal_satisfies_dynamics() {
        let p = CartPoleParams::default();
        let nom = nominal_trajectory(&p);
        assert_eq!(nom.inputs.len(), 1000);
        assert_eq!(nom.states.len(), 1001);
        for (k, (x, u)) in nom.states.iter().zip(&nom.inputs).enumerate() {
            assert!(u.is_finite());
            let f = cartpole_dynamics(x, *u, &p);
            let alpha = nom.profile.derivative(nom.times[k], 2);
            assert!((f[1] - alpha).abs() <= 1e-10 * alpha.abs().max(1.0), "step {k}");
        }
    }

    #[test]
    fn pure_integrator_rows() {
        let (sys, _) = cartpole_example();
        assert_eq!(sys.horizon, 999);
        for a in &sys.a {
            assert_eq!(a[(0, 1)], 0.001);
            assert_eq!(a[(2, 3)], 0.001);
        }
        assert_eq!(sys.g[0], cartpole_noise());
    }

    #[test]
    fn random_problem_is_reproducible_and_valid() {
        let (s1, b1) = random_problem(9, 3, 1, 2, 4);
        let (s2, b2) = random_problem(9, 3, 1, 2, 4);
        assert_eq!(s1, s2);
        assert_eq!(b1, b2);
        assert!(crate::validate(&s1, &b1).is_valid());
        assert!(crate::diffusion::feasibility_check(&s1, &b1));
    }

    #[test]
    fn steps_needs_integral_ratio() {
        let mut p = CartPoleParams::default();
        assert_eq!(p.steps(), Some(1000));
        p.ts = 0.0015;
        assert_eq!(p.steps(), None);
        p.ts = -0.001;
        assert_eq!(p.steps(), None);
    }
}
