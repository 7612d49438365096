//! `covsteer`: solve, simulate and cross-check covariance steering problems.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod artifact;
mod exit;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covsteer_core::examples::{cartpole_example, lti_example};
use covsteer_core::linalg::min_eigenvalue;
use covsteer_core::simulation::{
    ensemble_table, moments_table, singular_values_table, trajectories_table, InitialStateFeedback, Table,
};
use covsteer_core::*;
use serde_json::json;

use artifact::{matrix, rows, PolicyArtifact, PolicyKind, SolverInfo};
use exit::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(
    name = "covsteer",
    version,
    about = "Minimum-energy covariance steering for linear stochastic systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a spec and write policy.json, report.json and the analytic moments.
    Solve {
        spec: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Monte Carlo simulation of a solved policy.
    Simulate {
        /// Policy artifact; defaults to `<out>/policy.json`.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of runs whose sampled trajectories are written out.
        #[arg(long, default_value_t = 20)]
        keep: usize,
        #[arg(long, value_enum, default_value_t = Controller::Cc)]
        controller: Controller,
        #[command(flatten)]
        common: Common,
    },
    /// Check that LQG with terminal weight Lambda reproduces the steering policy.
    CompareLqg {
        spec: PathBuf,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Write one of the built-in example specs.
    GenExample {
        #[arg(value_enum)]
        which: Example,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory.
    #[arg(long, default_value = "covsteer-out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Args)]
struct Tolerances {
    /// Relative residual target for the Lambda solve.
    #[arg(long, default_value_t = 1e-10)]
    tol_newton: f64,
    /// Allowed relative terminal covariance error of the analytic check.
    #[arg(long, default_value_t = 1e-8)]
    tol_cov: f64,
    /// Allowed input deviation between the steering and LQG controllers.
    #[arg(long, default_value_t = 1e-8)]
    tol_gain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Controller {
    /// The steering policy itself.
    Cc,
    /// LQG with terminal weight Lambda.
    Lqg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Example {
    Lti,
    Cartpole,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Exit::Usage } else { Exit::Ok }.into();
        }
    };
    let result = match cli.command {
        Command::Solve { spec, common, tol } => cmd_solve(&spec, &common, &tol),
        Command::Simulate {
            policy,
            runs,
            seed,
            keep,
            controller,
            common,
        } => {
            let policy = policy.unwrap_or_else(|| common.out.join("policy.json"));
            cmd_simulate(&policy, runs, seed, keep, controller, &common)
        }
        Command::CompareLqg {
            spec,
            runs,
            seed,
            common,
            tol,
        } => cmd_compare_lqg(&spec, runs, seed, &common, &tol),
        Command::GenExample { which, out } => cmd_gen_example(which, out.as_deref()),
    };
    match result {
        Ok(()) => Exit::Ok.into(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit.into()
        }
    }
}

fn load_valid(path: &Path) -> Result<(LtvSystem, BoundaryConditions), CliError> {
    let (system, bc) = load_spec(path)?;
    check_valid(&system, &bc)?;
    Ok((system, bc))
}

fn check_valid(system: &LtvSystem, bc: &BoundaryConditions) -> Result<(), CliError> {
    let report = validate(system, bc);
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::new(Exit::Usage, format!("invalid spec:\n{report}")))
    }
}

fn solver_options(tol: &Tolerances) -> SolverOptions {
    SolverOptions {
        tolerance: tol.tol_newton,
        ..SolverOptions::default()
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn write_table(dir: &Path, name: &str, table: &Table, format: Format) -> Result<PathBuf, CliError> {
    match format {
        Format::Csv => {
            let path = dir.join(format!("{name}.csv"));
            let file = fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            table
                .write_csv(io::BufWriter::new(file))
                .map_err(|e| CliError::io(&path, e))?;
            Ok(path)
        }
        Format::Json => {
            let path = dir.join(format!("{name}.json"));
            write_json(&path, &table.to_json())?;
            Ok(path)
        }
    }
}

fn relative_error(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Terminal covariance seen through the selector, if any.
fn observed(bc: &BoundaryConditions, sigma: &Mat) -> Mat {
    match &bc.selector {
        Some(d) => d * sigma * d.transpose(),
        None => sigma.clone(),
    }
}

fn cmd_solve(spec: &Path, common: &Common, tol: &Tolerances) -> Result<(), CliError> {
    let (system, bc) = load_valid(spec)?;
    let ops = stack_operators(&system);
    let margin = match &bc.selector {
        None => feasibility_margin(&system, &bc),
        Some(d) => {
            let last = d * &system.g[system.horizon];
            min_eigenvalue(&(&bc.sigma_f - &last * last.transpose()))
        }
    };

    let (artifact, traj) = if bc.selector.is_some() {
        solve_partial(&system, &ops, &bc)?
    } else {
        if !feasibility_check(&system, &bc) {
            return Err(SteerError::Infeasible { min_eigenvalue: margin }.into());
        }
        let lm = solve_lambda(&system, &ops, &bc, &solver_options(tol))?;
        let info = SolverInfo {
            strategy: format!("{:?}", lm.strategy).to_lowercase(),
            iterations: lm.iterations,
            residual_norm: lm.residual_norm,
            second_order_ok: lm.second_order_ok,
            second_order_margin: lm.second_order_margin,
        };
        let lambda = lm.lambda.clone();
        let policy = build_policy(&system, &ops, &bc, lm)?;
        let traj = propagate_moments(&system, &policy, &bc)?;
        let artifact = PolicyArtifact {
            policy: PolicyKind::Multiplier { lambda: rows(&lambda) },
            mean_plan: policy
                .mean_plan
                .u_mean
                .iter()
                .map(|u| u.iter().copied().collect())
                .collect(),
            solver: Some(info),
            j_mu: traj.j_mu,
            j_sigma: traj.j_sigma,
            spec: PolicyArtifact::embed(&system, &bc)?,
        };
        (artifact, traj)
    };

    let mean_error = (traj.terminal_mean() - &bc.mu_f).norm();
    let cov_error = relative_error(&observed(&bc, traj.terminal_covariance()), &bc.sigma_f);
    let report = json!({
        "spec": spec.display().to_string(),
        "feasibility_margin": margin,
        "solver": artifact.solver,
        "lambda": match &artifact.policy {
            PolicyKind::Multiplier { lambda } => json!(lambda),
            PolicyKind::InitialStateFeedback { .. } => serde_json::Value::Null,
        },
        "j_mu": traj.j_mu,
        "j_sigma": traj.j_sigma,
        "j_total": traj.j_mu + traj.j_sigma,
        "terminal_mean_error": mean_error,
        "terminal_covariance_relative_error": cov_error,
        "terminal_covariance": rows(traj.terminal_covariance()),
    });

    create_dir(&common.out)?;
    artifact.save(&common.out.join("policy.json"))?;
    write_json(&common.out.join("report.json"), &report)?;
    write_table(&common.out, "moments", &moments_table(&traj), common.format)?;

    println!("feasibility margin  {margin:.6e}");
    if let PolicyKind::Multiplier { lambda } = &artifact.policy {
        println!("Lambda              {lambda:?}");
    }
    if let Some(info) = &artifact.solver {
        println!(
            "residual            {:.3e} ({} iterations, {})",
            info.residual_norm, info.iterations, info.strategy
        );
        println!("second-order margin {:.6e}", info.second_order_margin);
    }
    println!("J_mu                {:.6}", traj.j_mu);
    println!("J_sigma             {:.6}", traj.j_sigma);
    println!("terminal mean error {mean_error:.3e}");
    println!("terminal cov error  {cov_error:.3e} (relative)");
    println!("wrote {}", common.out.display());

    if !(cov_error <= tol.tol_cov) {
        return Err(CliError::new(
            Exit::NoConvergence,
            format!(
                "terminal covariance error {cov_error:.3e} exceeds --tol-cov {:.3e}",
                tol.tol_cov
            ),
        ));
    }
    Ok(())
}

fn solve_partial(
    system: &LtvSystem,
    ops: &StackedOperators,
    bc: &BoundaryConditions,
) -> Result<(PolicyArtifact, MomentTrajectory), CliError> {
    if !system.is_diffusionless() {
        return Err(CliError::new(
            Exit::Usage,
            "a selector D is only supported for noise-free systems (every G_k zero)",
        ));
    }
    let d = bc.selector.as_ref().expect("selector present");
    let gain = steer_partial_cov(ops, &bc.sigma0, d, &bc.sigma_f)?;
    let mean_plan = steer_mean(ops, bc)?;
    let policy = InitialStateFeedback {
        mean_plan,
        gain,
        mu0: bc.mu0.clone(),
    };
    let traj = propagate_moments(system, &policy, bc)?;
    let artifact = PolicyArtifact {
        policy: PolicyKind::InitialStateFeedback {
            gain: rows(&policy.gain.gain),
        },
        mean_plan: policy
            .mean_plan
            .u_mean
            .iter()
            .map(|u| u.iter().copied().collect())
            .collect(),
        solver: None,
        j_mu: traj.j_mu,
        j_sigma: traj.j_sigma,
        spec: PolicyArtifact::embed(system, bc)?,
    };
    Ok((artifact, traj))
}

fn mc_options(runs: usize, seed: u64, keep: usize) -> Result<MonteCarloOptions, CliError> {
    if runs < 2 {
        return Err(CliError::new(Exit::Usage, "--runs must be at least 2"));
    }
    let threads = match std::env::var("COVSTEER_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(t) if t > 0 => Some(t),
            _ => {
                return Err(CliError::new(
                    Exit::Usage,
                    format!("COVSTEER_THREADS must be a positive integer, got `{v}`"),
                ))
            }
        },
        Err(_) => None,
    };
    Ok(MonteCarloOptions {
        threads,
        keep_trajectories: keep.min(runs),
        ..MonteCarloOptions::new(runs, seed)
    })
}

fn cmd_simulate(
    policy_path: &Path,
    runs: usize,
    seed: u64,
    keep: usize,
    controller: Controller,
    common: &Common,
) -> Result<(), CliError> {
    let opts = mc_options(runs, seed, keep)?;
    let artifact = PolicyArtifact::load(policy_path)?;
    let (system, bc) = artifact.problem()?;
    check_valid(&system, &bc)?;
    let ops = stack_operators(&system);

    let (traj, ens) = match &artifact.policy {
        PolicyKind::Multiplier { lambda } => {
            let lambda = matrix("lambda", lambda)?;
            let lm = given_lambda(&system, &ops, &bc, &lambda)?;
            let policy = build_policy(&system, &ops, &bc, lm)?;
            match controller {
                Controller::Cc => (
                    propagate_moments(&system, &policy, &bc)?,
                    monte_carlo(&system, &policy, &bc, &opts)?,
                ),
                Controller::Lqg => {
                    let lqg = riccati_backward(&system, &lambda)?;
                    let lqg_policy = LqgPolicy::new(&system, &bc, policy.mean_plan.clone(), &lqg);
                    (
                        propagate_moments(&system, &lqg_policy, &bc)?,
                        monte_carlo(&system, &lqg_policy, &bc, &opts)?,
                    )
                }
            }
        }
        PolicyKind::InitialStateFeedback { gain } => {
            if controller == Controller::Lqg {
                return Err(CliError::new(Exit::Usage, "--controller lqg needs a multiplier policy"));
            }
            let gain = matrix("gain", gain)?;
            let d = bc
                .selector
                .as_ref()
                .ok_or_else(|| CliError::new(Exit::Io, "policy artifact has a gain but its spec has no selector"))?;
            let mut g = steer_partial_cov(&ops, &bc.sigma0, d, &bc.sigma_f)?;
            if g.gain.shape() != gain.shape() {
                return Err(CliError::new(Exit::Io, "policy artifact gain does not match its spec"));
            }
            g.closed_loop = ops.abar() + ops.bbar() * &gain;
            g.gain = gain;
            let policy = InitialStateFeedback {
                mean_plan: steer_mean(&ops, &bc)?,
                gain: g,
                mu0: bc.mu0.clone(),
            };
            (
                propagate_moments(&system, &policy, &bc)?,
                monte_carlo(&system, &policy, &bc, &opts)?,
            )
        }
    };

    let expected = traj.j_mu + traj.j_sigma;
    let observed_terminal = observed(&bc, ens.terminal_covariance());
    let cov_error = relative_error(&observed_terminal, &bc.sigma_f);
    let cost = json!({
        "runs": ens.runs,
        "seed": ens.seed,
        "controller": format!("{controller:?}").to_lowercase(),
        "analytic": { "j_mu": traj.j_mu, "j_sigma": traj.j_sigma, "j_total": expected },
        "sample": {
            "j_mu": ens.cost.j_mu,
            "j_sigma": ens.cost.j_sigma,
            "j_total": ens.cost.j_total,
            "mean": ens.sample_cost_mean,
            "stderr": ens.sample_cost_stderr,
        },
        "cost_z_score": (ens.sample_cost_mean - expected) / ens.sample_cost_stderr,
        "terminal_covariance_sample": rows(&observed_terminal),
        "terminal_covariance_relative_error": cov_error,
    });

    create_dir(&common.out)?;
    write_table(&common.out, "moments", &moments_table(&traj), common.format)?;
    write_table(&common.out, "ensemble", &ensemble_table(&traj, &ens), common.format)?;
    write_table(
        &common.out,
        "singular_values",
        &singular_values_table(&traj, Some(&ens)),
        common.format,
    )?;
    if !ens.trajectories.is_empty() {
        write_table(&common.out, "trajectories", &trajectories_table(&ens), common.format)?;
    }
    write_json(&common.out.join("cost.json"), &cost)?;

    println!("runs                {}", ens.runs);
    println!(
        "sample cost         {:.6} +- {:.6}",
        ens.sample_cost_mean, ens.sample_cost_stderr
    );
    println!("analytic cost       {expected:.6}");
    println!("terminal cov error  {cov_error:.4e} (relative, sample)");
    println!("wrote {}", common.out.display());
    Ok(())
}

fn cmd_compare_lqg(spec: &Path, runs: usize, seed: u64, common: &Common, tol: &Tolerances) -> Result<(), CliError> {
    let (system, bc) = load_valid(spec)?;
    if bc.selector.is_some() {
        return Err(CliError::new(
            Exit::Usage,
            "compare-lqg needs a full terminal covariance",
        ));
    }
    let ops = stack_operators(&system);
    let lm = solve_lambda(&system, &ops, &bc, &solver_options(tol))?;
    let lambda = lm.lambda.clone();
    let policy = build_policy(&system, &ops, &bc, lm)?;
    let lqg = riccati_backward(&system, &lambda)?;
    let lqg_policy = LqgPolicy::new(&system, &bc, policy.mean_plan.clone(), &lqg);
    let report = equivalence_check(&system, &bc, &policy, &lqg_policy, runs, seed);
    let cc = propagate_moments(&system, &policy, &bc)?;
    let lq = propagate_moments(&system, &lqg_policy, &bc)?;
    let riccati_terminal = lqg.terminal_covariance(&system, &bc.sigma0);
    let passed = report.passes(tol.tol_gain);

    let out = json!({
        "spec": spec.display().to_string(),
        "lambda": rows(&lambda),
        "equivalence": report,
        "tolerance": tol.tol_gain,
        "passed": passed,
        "cc": { "j_mu": cc.j_mu, "j_sigma": cc.j_sigma },
        "lqg": { "j_mu": lq.j_mu, "j_sigma": lq.j_sigma },
        "lqg_terminal_covariance": rows(&riccati_terminal),
        "lqg_terminal_covariance_relative_error": relative_error(&riccati_terminal, &bc.sigma_f),
    });
    create_dir(&common.out)?;
    write_json(&common.out.join("lqg_comparison.json"), &out)?;

    println!(
        "{} max input deviation {:.3e} over {} realizations (tolerance {:.1e}, largest input {:.3e})",
        if passed { "PASS" } else { "FAIL" },
        report.max_deviation,
        report.realizations,
        tol.tol_gain,
        report.max_input
    );
    if passed {
        Ok(())
    } else {
        Err(CliError::new(
            Exit::Mismatch,
            format!(
                "steering and LQG inputs differ by {:.3e} at step {}",
                report.max_deviation, report.worst_step
            ),
        ))
    }
}

fn cmd_gen_example(which: Example, out: Option<&Path>) -> Result<(), CliError> {
    let (system, bc) = match which {
        Example::Lti => lti_example(),
        Example::Cartpole => cartpole_example(),
    };
    match out {
        Some(path) => save_spec(path, &system, &bc)?,
        None => {
            let text = render_spec(&system, &bc)?;
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| CliError::new(Exit::Io, format!("cannot write to stdout: {e}")))?;
        }
    }
    Ok(())
}
