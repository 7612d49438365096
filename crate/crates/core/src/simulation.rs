//! Moment propagation and Monte-Carlo ensembles under linear policies.
//!
//! Every policy here is linear in the state deviation, so the pair
//! (deviation, controller memory) follows `s_{k+1} = F_k s_k + H_k w_k`
//! with input deviation `E_k s_k`; propagating its covariance gives exact
//! second moments and the feedback part of the cost.

use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{policy_step, PolicyState, SteeringPolicy};
use crate::error::{Result, SteerError};
use crate::linalg::{psd_sqrt, symmetrize, Mat, Vector};
use crate::lqg::LqgPolicy;
use crate::mean::MeanPlan;
use crate::nodiffusion::DiffusionlessGain;
use crate::system::{BoundaryConditions, LtvSystem};

/// One step of the augmented deviation dynamics.
pub struct AugmentedStep {
    pub f: Mat,
    pub h: Mat,
    pub e: Mat,
}

/// A controller whose input is affine in the measured states.
pub trait LinearPolicy: Sync {
    type State: Clone + Send;

    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn horizon(&self) -> usize;
    fn mean_inputs(&self) -> &[Vector];

    /// `s_0 = init * xtilde_0`.
    fn augmented_init(&self) -> Mat;
    fn augmented_step(&self, system: &LtvSystem, k: usize) -> AugmentedStep;

    fn start(&self) -> Self::State;
    fn control(&self, k: usize, x: &Vector, state: &mut Self::State) -> Vector;

    /// Covariances of `x_0 ..= x_{N+1}` and of each `u_k`.
    fn covariances(&self, system: &LtvSystem, sigma0: &Mat) -> (Vec<Mat>, Vec<Mat>) {
        augmented_covariances(self, system, sigma0)
    }
}

/// Covariances from the augmented recursion `S_{k+1} = F S F' + H H'`.
pub fn augmented_covariances<P: LinearPolicy + ?Sized>(
    policy: &P,
    system: &LtvSystem,
    sigma0: &Mat,
) -> (Vec<Mat>, Vec<Mat>) {
    let n = system.n;
    let init = policy.augmented_init();
    let mut s = symmetrize(&(&init * sigma0 * init.transpose()));
    let mut sigma = Vec::with_capacity(system.steps() + 1);
    let mut input_cov = Vec::with_capacity(system.steps());
    sigma.push(s.view((0, 0), (n, n)).into_owned());
    for k in 0..system.steps() {
        let step = policy.augmented_step(system, k);
        input_cov.push(symmetrize(&(&step.e * &s * step.e.transpose())));
        s = symmetrize(&(&step.f * &s * step.f.transpose() + &step.h * step.h.transpose()));
        sigma.push(s.view((0, 0), (n, n)).into_owned());
    }
    (sigma, input_cov)
}

impl LinearPolicy for SteeringPolicy {
    type State = PolicyState;

    fn n(&self) -> usize {
        SteeringPolicy::n(self)
    }

    fn m(&self) -> usize {
        SteeringPolicy::m(self)
    }

    fn horizon(&self) -> usize {
        SteeringPolicy::horizon(self)
    }

    fn mean_inputs(&self) -> &[Vector] {
        &self.mean_plan.u_mean
    }

    fn augmented_init(&self) -> Mat {
        let n = SteeringPolicy::n(self);
        let mut init = Mat::zeros(2 * n, n);
        init.view_mut((0, 0), (n, n)).fill_with_identity();
        init.view_mut((n, 0), (n, n)).copy_from(&self.lambda_phi[0]);
        init
    }

    // s = (xtilde_k, z_k) with z_k the accumulated Lambda Phi_i y_i
    fn augmented_step(&self, system: &LtvSystem, k: usize) -> AugmentedStep {
        let n = SteeringPolicy::n(self);
        let r = system.r;
        let bt = self.input[k].transpose();
        let mut f = Mat::zeros(2 * n, 2 * n);
        f.view_mut((0, 0), (n, n)).copy_from(&system.a[k]);
        f.view_mut((0, n), (n, n)).copy_from(&(-(&system.b[k] * &bt)));
        f.view_mut((n, n), (n, n)).fill_with_identity();
        let mut h = Mat::zeros(2 * n, r);
        h.view_mut((0, 0), (n, r)).copy_from(&system.g[k]);
        if k < SteeringPolicy::horizon(self) {
            h.view_mut((n, 0), (n, r))
                .copy_from(&(&self.lambda_phi[k + 1] * &system.g[k]));
        }
        let mut e = Mat::zeros(bt.nrows(), 2 * n);
        e.view_mut((0, n), (bt.nrows(), n)).copy_from(&(-bt));
        AugmentedStep { f, h, e }
    }

    fn start(&self) -> PolicyState {
        PolicyState::new(self)
    }

    fn control(&self, k: usize, x: &Vector, state: &mut PolicyState) -> Vector {
        let (u, next) = policy_step(self, k, x, state).expect("steps are visited in order");
        *state = next;
        u
    }

    // sum of subsystem responses; unlike z_k these stay at the scale of x and u
    fn covariances(&self, system: &LtvSystem, sigma0: &Mat) -> (Vec<Mat>, Vec<Mat>) {
        let n = system.n;
        let steps = system.steps();
        // per subsystem: state response and Lambda Phi_i times its noise factor
        let mut responses: Vec<(Mat, Mat)> = Vec::with_capacity(steps + 1);
        let mut sigma = Vec::with_capacity(steps + 1);
        let mut input_cov = Vec::with_capacity(steps);
        for k in 0..=steps {
            let factor = if k == 0 {
                psd_sqrt(sigma0)
            } else {
                system.g[k - 1].clone()
            };
            let drive = if k < steps {
                &self.lambda_phi[k] * &factor
            } else {
                Mat::zeros(n, factor.ncols())
            };
            responses.push((factor, drive));
            let mut cov = Mat::zeros(n, n);
            for (psi, _) in &responses {
                cov += psi * psi.transpose();
            }
            sigma.push(symmetrize(&cov));
            if k == steps {
                break;
            }
            let bt = self.input[k].transpose();
            let mut cu = Mat::zeros(system.m, system.m);
            for (psi, drive) in responses.iter_mut() {
                let gamma = -(&bt * &*drive);
                cu += &gamma * gamma.transpose();
                *psi = &system.a[k] * &*psi + &system.b[k] * gamma;
            }
            input_cov.push(symmetrize(&cu));
        }
        (sigma, input_cov)
    }
}

impl LinearPolicy for LqgPolicy {
    type State = ();

    fn n(&self) -> usize {
        self.mean_states[0].len()
    }

    fn m(&self) -> usize {
        self.gains[0].nrows()
    }

    fn horizon(&self) -> usize {
        self.gains.len() - 1
    }

    fn mean_inputs(&self) -> &[Vector] {
        &self.mean_plan.u_mean
    }

    fn augmented_init(&self) -> Mat {
        Mat::identity(self.n(), self.n())
    }

    fn augmented_step(&self, system: &LtvSystem, k: usize) -> AugmentedStep {
        AugmentedStep {
            f: &system.a[k] - &system.b[k] * &self.gains[k],
            h: system.g[k].clone(),
            e: -self.gains[k].clone(),
        }
    }

    fn start(&self) {}

    fn control(&self, k: usize, x: &Vector, _: &mut ()) -> Vector {
        self.input(k, x)
    }
}

/// Open-loop feedback on the initial deviation only, `u_k = E[u_k] + L_k xtilde_0`.
#[derive(Debug, Clone)]
pub struct InitialStateFeedback {
    pub mean_plan: MeanPlan,
    pub gain: DiffusionlessGain,
    pub mu0: Vector,
}

impl InitialStateFeedback {
    fn block(&self, k: usize) -> Mat {
        self.gain.step_gain(k, self.m())
    }
}

impl LinearPolicy for InitialStateFeedback {
    type State = Vector;

    fn n(&self) -> usize {
        self.mu0.len()
    }

    fn m(&self) -> usize {
        self.mean_plan.u_mean[0].len()
    }

    fn horizon(&self) -> usize {
        self.mean_plan.u_mean.len() - 1
    }

    fn mean_inputs(&self) -> &[Vector] {
        &self.mean_plan.u_mean
    }

    fn augmented_init(&self) -> Mat {
        let n = self.n();
        let eye = Mat::identity(n, n);
        let mut init = Mat::zeros(2 * n, n);
        init.view_mut((0, 0), (n, n)).copy_from(&eye);
        init.view_mut((n, 0), (n, n)).copy_from(&eye);
        init
    }

    fn augmented_step(&self, system: &LtvSystem, k: usize) -> AugmentedStep {
        let (n, m, r) = (self.n(), self.m(), system.r);
        let l = self.block(k);
        let mut f = Mat::zeros(2 * n, 2 * n);
        f.view_mut((0, 0), (n, n)).copy_from(&system.a[k]);
        f.view_mut((0, n), (n, n)).copy_from(&(&system.b[k] * &l));
        f.view_mut((n, n), (n, n)).fill_with_identity();
        let mut h = Mat::zeros(2 * n, r);
        h.view_mut((0, 0), (n, r)).copy_from(&system.g[k]);
        let mut e = Mat::zeros(m, 2 * n);
        e.view_mut((0, n), (m, n)).copy_from(&l);
        AugmentedStep { f, h, e }
    }

    fn start(&self) -> Vector {
        Vector::zeros(self.n())
    }

    fn control(&self, k: usize, x: &Vector, x0_dev: &mut Vector) -> Vector {
        if k == 0 {
            *x0_dev = x - &self.mu0;
        }
        &self.mean_plan.u_mean[k] + self.block(k) * &*x0_dev
    }
}

fn check_dimensions<P: LinearPolicy>(system: &LtvSystem, policy: &P, bc: &BoundaryConditions) -> Result<()> {
    if policy.n() != system.n || policy.m() != system.m || policy.horizon() != system.horizon {
        return Err(SteerError::DimensionMismatch(format!(
            "policy is n={}, m={}, N={} but system is n={}, m={}, N={}",
            policy.n(),
            policy.m(),
            policy.horizon(),
            system.n,
            system.m,
            system.horizon
        )));
    }
    if bc.mu0.len() != system.n || bc.sigma0.shape() != (system.n, system.n) {
        return Err(SteerError::DimensionMismatch(
            "initial moments do not match the state".into(),
        ));
    }
    Ok(())
}

/// Noise-free trajectory under the mean inputs.
pub fn mean_trajectory(system: &LtvSystem, mu0: &Vector, inputs: &[Vector]) -> Vec<Vector> {
    let mut mu = Vec::with_capacity(system.steps() + 1);
    mu.push(mu0.clone());
    for k in 0..system.steps() {
        let next = &system.a[k] * &mu[k] + &system.b[k] * &inputs[k];
        mu.push(next);
    }
    mu
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTrajectory {
    /// `mu_0 ..= mu_{N+1}`.
    pub mu: Vec<Vector>,
    pub sigma: Vec<Mat>,
    /// Covariance of each `u_k`.
    pub input_cov: Vec<Mat>,
    pub j_mu: f64,
    pub j_sigma: f64,
}

impl MomentTrajectory {
    pub fn cost(&self) -> CostSummary {
        CostSummary::new(self.j_mu, self.j_sigma)
    }

    pub fn terminal_mean(&self) -> &Vector {
        self.mu.last().expect("non-empty")
    }

    pub fn terminal_covariance(&self) -> &Mat {
        self.sigma.last().expect("non-empty")
    }
}

pub fn propagate_moments<P: LinearPolicy>(
    system: &LtvSystem,
    policy: &P,
    bc: &BoundaryConditions,
) -> Result<MomentTrajectory> {
    check_dimensions(system, policy, bc)?;
    let inputs = policy.mean_inputs();
    let mu = mean_trajectory(system, &bc.mu0, inputs);
    let (sigma, input_cov) = policy.covariances(system, &bc.sigma0);
    let j_sigma = input_cov.iter().map(|c| c.trace()).sum();
    let j_mu = inputs.iter().map(|u| u.norm_squared()).sum();
    Ok(MomentTrajectory {
        mu,
        sigma,
        input_cov,
        j_mu,
        j_sigma,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostSummary {
    pub j_mu: f64,
    pub j_sigma: f64,
    pub j_total: f64,
}

impl CostSummary {
    pub fn new(j_mu: f64, j_sigma: f64) -> Self {
        Self {
            j_mu,
            j_sigma,
            j_total: j_mu + j_sigma,
        }
    }
}

/// Split a sample of input sequences into mean and spread parts, using the
/// population variance so the parts add up to the sample mean cost.
pub fn cost_decompose(runs: &[Vec<Vector>]) -> CostSummary {
    let count = runs.len();
    if count == 0 {
        return CostSummary::new(0.0, 0.0);
    }
    let steps = runs[0].len();
    let mut j_mu = 0.0;
    let mut j_sigma = 0.0;
    for k in 0..steps {
        let mean = runs
            .iter()
            .map(|r| &r[k])
            .fold(Vector::zeros(runs[0][k].len()), |acc, u| acc + u)
            / count as f64;
        j_mu += mean.norm_squared();
        j_sigma += runs.iter().map(|r| (&r[k] - &mean).norm_squared()).sum::<f64>() / count as f64;
    }
    CostSummary::new(j_mu, j_sigma)
}

/// States and inputs of a single realization.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

/// Independent stream per run: the generator is seeded from `seed` and
/// switched to stream `run`; `x_0` is drawn first, then `w_0, w_1, ...`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn standard_normal(rng: &mut ChaCha8Rng, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

fn simulate<P, F>(system: &LtvSystem, policy: &P, mu0: &Vector, root0: &Mat, rng: &mut ChaCha8Rng, mut visit: F)
where
    P: LinearPolicy,
    F: FnMut(usize, &Vector, Option<&Vector>),
{
    let mut x = mu0 + root0 * standard_normal(rng, system.n);
    let mut state = policy.start();
    for k in 0..system.steps() {
        let u = policy.control(k, &x, &mut state);
        visit(k, &x, Some(&u));
        let w = standard_normal(rng, system.r);
        x = system.step(k, &x, &u, &w);
    }
    visit(system.steps(), &x, None);
}

pub fn sample_run<P: LinearPolicy>(
    system: &LtvSystem,
    policy: &P,
    bc: &BoundaryConditions,
    seed: u64,
    run: u64,
) -> RunRecord {
    let root0 = psd_sqrt(&bc.sigma0);
    let mut rng = run_rng(seed, run);
    let mut states = Vec::with_capacity(system.steps() + 1);
    let mut inputs = Vec::with_capacity(system.steps());
    simulate(system, policy, &bc.mu0, &root0, &mut rng, |_, x, u| {
        states.push(x.clone());
        if let Some(u) = u {
            inputs.push(u.clone());
        }
    });
    RunRecord { states, inputs }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub runs: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    /// How many runs to keep as decimated trajectories.
    pub keep_trajectories: usize,
    pub max_points: usize,
}

impl MonteCarloOptions {
    pub fn new(runs: usize, seed: u64) -> Self {
        Self {
            runs,
            seed,
            threads: None,
            keep_trajectories: 0,
            max_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrajectory {
    pub run: usize,
    pub steps: Vec<usize>,
    pub states: Vec<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub runs: usize,
    pub seed: u64,
    pub sample_mu: Vec<Vector>,
    /// Unbiased sample covariance per step.
    pub sample_sigma: Vec<Mat>,
    pub sample_cost_mean: f64,
    pub sample_cost_stderr: f64,
    /// Sample split of the cost; `j_mu + j_sigma` equals `sample_cost_mean`.
    pub cost: CostSummary,
    pub terminal_states: Vec<Vector>,
    pub trajectories: Vec<StoredTrajectory>,
}

impl EnsembleResult {
    pub fn terminal_covariance(&self) -> &Mat {
        self.sample_sigma.last().expect("non-empty")
    }
}

/// Per-chunk sums of deviations from the noise-free reference.
#[derive(Clone)]
struct Accumulator {
    dx: Vec<Vector>,
    dxx: Vec<Mat>,
    du: Vec<Vector>,
    duu: Vec<f64>,
    costs: Vec<f64>,
    terminal: Vec<Vector>,
    stored: Vec<StoredTrajectory>,
}

impl Accumulator {
    fn new(system: &LtvSystem) -> Self {
        let points = system.steps() + 1;
        Self {
            dx: vec![Vector::zeros(system.n); points],
            dxx: vec![Mat::zeros(system.n, system.n); points],
            du: vec![Vector::zeros(system.m); system.steps()],
            duu: vec![0.0; system.steps()],
            costs: Vec::new(),
            terminal: Vec::new(),
            stored: Vec::new(),
        }
    }

    fn merge(&mut self, other: Accumulator) {
        for (a, b) in self.dx.iter_mut().zip(&other.dx) {
            *a += b;
        }
        for (a, b) in self.dxx.iter_mut().zip(&other.dxx) {
            *a += b;
        }
        for (a, b) in self.du.iter_mut().zip(&other.du) {
            *a += b;
        }
        for (a, b) in self.duu.iter_mut().zip(&other.duu) {
            *a += b;
        }
        self.costs.extend(other.costs);
        self.terminal.extend(other.terminal);
        self.stored.extend(other.stored);
    }
}

const CHUNK: usize = 256;

/// Run `runs` independent realizations. The result depends only on
/// `(seed, runs)`: runs are grouped in fixed chunks and merged in order, so
/// the thread count never changes a bit of the output.
pub fn monte_carlo<P: LinearPolicy>(
    system: &LtvSystem,
    policy: &P,
    bc: &BoundaryConditions,
    opts: &MonteCarloOptions,
) -> Result<EnsembleResult> {
    check_dimensions(system, policy, bc)?;
    if opts.runs < 2 {
        return Err(SteerError::DimensionMismatch("at least 2 runs are needed".into()));
    }
    let mean_u = policy.mean_inputs();
    let mu = mean_trajectory(system, &bc.mu0, mean_u);
    let root0 = psd_sqrt(&bc.sigma0);
    let points = system.steps() + 1;
    let stride = points.div_ceil(opts.max_points.max(1)).max(1);

    let chunk = |c: usize| {
        let mut acc = Accumulator::new(system);
        let end = ((c + 1) * CHUNK).min(opts.runs);
        for run in c * CHUNK..end {
            let mut rng = run_rng(opts.seed, run as u64);
            let keep = run < opts.keep_trajectories;
            let mut stored = StoredTrajectory {
                run,
                steps: Vec::new(),
                states: Vec::new(),
            };
            let mut cost = 0.0;
            simulate(system, policy, &bc.mu0, &root0, &mut rng, |k, x, u| {
                let d = x - &mu[k];
                acc.dxx[k] += &d * d.transpose();
                acc.dx[k] += d;
                if let Some(u) = u {
                    let du = u - &mean_u[k];
                    acc.duu[k] += du.norm_squared();
                    acc.du[k] += du;
                    cost += u.norm_squared();
                } else {
                    acc.terminal.push(x.clone());
                }
                if keep && (k % stride == 0 || k + 1 == points) {
                    stored.steps.push(k);
                    stored.states.push(x.clone());
                }
            });
            acc.costs.push(cost);
            if keep {
                acc.stored.push(stored);
            }
        }
        acc
    };

    let chunks = opts.runs.div_ceil(CHUNK);
    let run_all = || -> Vec<Accumulator> { (0..chunks).into_par_iter().map(chunk).collect() };
    let parts = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| SteerError::DimensionMismatch(format!("thread pool: {e}")))?
            .install(run_all),
        None => run_all(),
    };
    let mut parts = parts.into_iter();
    let mut total = parts.next().expect("at least one chunk");
    for p in parts {
        total.merge(p);
    }

    let r = opts.runs as f64;
    let mut sample_mu = Vec::with_capacity(points);
    let mut sample_sigma = Vec::with_capacity(points);
    for k in 0..points {
        let mean_dev = &total.dx[k] / r;
        let cov = (&total.dxx[k] - &mean_dev * mean_dev.transpose() * r) / (r - 1.0);
        sample_mu.push(&mu[k] + &mean_dev);
        sample_sigma.push(symmetrize(&cov));
    }
    let mut j_mu = 0.0;
    let mut j_sigma = 0.0;
    for k in 0..system.steps() {
        let mean_du = &total.du[k] / r;
        j_mu += (&mean_u[k] + &mean_du).norm_squared();
        j_sigma += total.duu[k] / r - mean_du.norm_squared();
    }
    let cost_mean = total.costs.iter().sum::<f64>() / r;
    let var = total.costs.iter().map(|c| (c - cost_mean).powi(2)).sum::<f64>() / (r - 1.0);
    Ok(EnsembleResult {
        runs: opts.runs,
        seed: opts.seed,
        sample_mu,
        sample_sigma,
        sample_cost_mean: cost_mean,
        sample_cost_stderr: (var / r).sqrt(),
        cost: CostSummary::new(j_mu, j_sigma),
        terminal_states: total.terminal,
        trajectories: total.stored,
    })
}

/// Sample skewness and excess kurtosis of each coordinate.
pub fn marginal_shape(samples: &[Vector]) -> Vec<(f64, f64)> {
    let count = samples.len() as f64;
    let dim = samples.first().map_or(0, |s| s.len());
    (0..dim)
        .map(|i| {
            let mean = samples.iter().map(|s| s[i]).sum::<f64>() / count;
            let moment = |p: i32| samples.iter().map(|s| (s[i] - mean).powi(p)).sum::<f64>() / count;
            let m2 = moment(2);
            (moment(3) / m2.powf(1.5), moment(4) / (m2 * m2) - 3.0)
        })
        .collect()
}

/// Rectangular numeric table with named columns, written as CSV or JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Array of objects keyed by column name.
    pub fn to_json(&self) -> serde_json::Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj = self
                    .header
                    .iter()
                    .zip(row)
                    .map(|(h, v)| (h.clone(), serde_json::json!(v)))
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        serde_json::Value::Array(rows)
    }
}

fn singular_values(m: &Mat) -> Vec<f64> {
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// `step, mu_i, Sigma_ij (row-major), sv_i`.
pub fn moments_table(traj: &MomentTrajectory) -> Table {
    let n = traj.mu[0].len();
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("mu_{i}")));
    for i in 0..n {
        header.extend((0..n).map(|j| format!("sigma_{i}{j}")));
    }
    header.extend((0..n).map(|i| format!("sv_{i}")));
    let rows = traj
        .mu
        .iter()
        .zip(&traj.sigma)
        .enumerate()
        .map(|(k, (mu, sigma))| {
            let mut row = vec![k as f64];
            row.extend(mu.iter());
            for i in 0..n {
                row.extend((0..n).map(|j| sigma[(i, j)]));
            }
            row.extend(singular_values(sigma));
            row
        })
        .collect();
    Table { header, rows }
}

/// Per-state sample mean with a `+-3 sigma` envelope, next to the analytic one.
pub fn ensemble_table(traj: &MomentTrajectory, ens: &EnsembleResult) -> Table {
    let n = traj.mu[0].len();
    let mut header = vec!["step".to_string()];
    for i in 0..n {
        for name in [
            "mean",
            "lower",
            "upper",
            "analytic_mean",
            "analytic_lower",
            "analytic_upper",
        ] {
            header.push(format!("x{i}_{name}"));
        }
    }
    let rows = (0..ens.sample_mu.len())
        .map(|k| {
            let mut row = vec![k as f64];
            for i in 0..n {
                let (m, s) = (ens.sample_mu[k][i], ens.sample_sigma[k][(i, i)].max(0.0).sqrt());
                let (am, asd) = (traj.mu[k][i], traj.sigma[k][(i, i)].max(0.0).sqrt());
                row.extend([m, m - 3.0 * s, m + 3.0 * s, am, am - 3.0 * asd, am + 3.0 * asd]);
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Singular values of the analytic covariance and, if given, the sample one.
pub fn singular_values_table(traj: &MomentTrajectory, ens: Option<&EnsembleResult>) -> Table {
    let n = traj.mu[0].len();
    let mut header = vec!["step".to_string()];
    header.extend((0..n).map(|i| format!("analytic_sv_{i}")));
    if ens.is_some() {
        header.extend((0..n).map(|i| format!("sample_sv_{i}")));
    }
    let rows = traj
        .sigma
        .iter()
        .enumerate()
        .map(|(k, sigma)| {
            let mut row = vec![k as f64];
            row.extend(singular_values(sigma));
            if let Some(e) = ens {
                row.extend(singular_values(&e.sample_sigma[k]));
            }
            row
        })
        .collect();
    Table { header, rows }
}

/// Decimated sample paths, one row per stored point.
pub fn trajectories_table(ens: &EnsembleResult) -> Table {
    let n = ens.sample_mu[0].len();
    let mut header = vec!["run".to_string(), "step".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    let mut rows = Vec::new();
    for t in &ens.trajectories {
        for (k, x) in t.steps.iter().zip(&t.states) {
            let mut row = vec![t.run as f64, *k as f64];
            row.extend(x.iter());
            rows.push(row);
        }
    }
    Table { header, rows }
}
